use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::bbox::BBoxSet;
use super::tensor::ImageTensor;
use crate::error::Result;
use crate::rng::{child_rng, Rng};

/// The five pre-computed views of each radiograph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentVariant {
    Original,
    TracheaZero,
    TracheaNoise,
    BgTracheaZero,
    BgTracheaNoise,
}

impl AugmentVariant {
    pub const ALL: [AugmentVariant; 5] = [
        AugmentVariant::Original,
        AugmentVariant::TracheaZero,
        AugmentVariant::TracheaNoise,
        AugmentVariant::BgTracheaZero,
        AugmentVariant::BgTracheaNoise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentVariant::Original => "original",
            AugmentVariant::TracheaZero => "trachea_zero",
            AugmentVariant::TracheaNoise => "trachea_noise",
            AugmentVariant::BgTracheaZero => "bg_trachea_zero",
            AugmentVariant::BgTracheaNoise => "bg_trachea_noise",
        }
    }

    /// Whether pixel (x, y) is overwritten by this variant.
    #[inline]
    pub fn affects(self, boxes: &BBoxSet, x: usize, y: usize) -> bool {
        match self {
            AugmentVariant::Original => false,
            AugmentVariant::TracheaZero | AugmentVariant::TracheaNoise => {
                boxes.trachea.contains(x, y)
            }
            AugmentVariant::BgTracheaZero | AugmentVariant::BgTracheaNoise => {
                boxes.trachea.contains(x, y) || !boxes.in_anatomy(x, y)
            }
        }
    }

    fn is_noise(self) -> bool {
        matches!(
            self,
            AugmentVariant::TracheaNoise | AugmentVariant::BgTracheaNoise
        )
    }
}

/// Mask or noise-fill the variant's region. Noise is uniform on the 256
/// eight-bit levels `k/255`, drawn in row-major order over affected pixels
/// from a stream derived from `(seed, variant)`, so stored PNGs are lossless.
pub fn apply_bbox_variant(
    img: &ImageTensor,
    boxes: &BBoxSet,
    variant: AugmentVariant,
    seed: u64,
) -> Result<ImageTensor> {
    boxes.validate(img.width(), img.height())?;
    let mut out = img.clone();
    if variant == AugmentVariant::Original {
        return Ok(out);
    }
    let mut rng = child_rng(seed, &[variant.index() as u64]);
    let (h, w) = img.dims();
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            if variant.affects(boxes, x, y) {
                data[y * w + x] = if variant.is_noise() {
                    f64::from(rng.random::<u8>()) / 255.0
                } else {
                    0.0
                };
            }
        }
    }
    Ok(out)
}

/// Mirror columns (left-right swap).
pub fn flip_lr(img: &ImageTensor) -> ImageTensor {
    let (h, w) = img.dims();
    let mut out = img.clone();
    let data = out.data_mut();
    for y in 0..h {
        data[y * w..(y + 1) * w].reverse();
    }
    out
}

/// Add `delta` to every pixel and clamp to [0,1].
pub fn adjust_brightness(img: &ImageTensor, delta: f64) -> ImageTensor {
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v + delta).clamp(0.0, 1.0);
    }
    out
}

pub const FLIP_PROBABILITY: f64 = 0.5;
pub const MAX_BRIGHTNESS_DELTA: f64 = 0.05;

/// A drawn online augmentation: optional mirror plus brightness shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineAugment {
    pub flip: bool,
    pub delta: f64,
}

impl OnlineAugment {
    pub const IDENTITY: OnlineAugment = OnlineAugment {
        flip: false,
        delta: 0.0,
    };

    pub fn sample(rng: &mut Rng) -> Self {
        let flip = rng.random::<f64>() < FLIP_PROBABILITY;
        let delta = rng.random::<f64>() * MAX_BRIGHTNESS_DELTA;
        Self { flip, delta }
    }

    pub fn apply(&self, img: &ImageTensor) -> ImageTensor {
        let flipped = if self.flip { flip_lr(img) } else { img.clone() };
        if self.delta == 0.0 {
            flipped
        } else {
            adjust_brightness(&flipped, self.delta)
        }
    }
}

/// Training-time augmentation: mirror with probability 0.5, then add a
/// single uniform brightness delta in [0, 0.05] and clamp.
pub fn online_augment(img: &ImageTensor, rng: &mut Rng) -> ImageTensor {
    OnlineAugment::sample(rng).apply(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::bbox::BBox;
    use crate::rng::rng_from_seed;

    fn boxes8() -> BBoxSet {
        BBoxSet {
            left_lung: BBox::new(0, 0, 3, 8),
            right_lung: BBox::new(3, 0, 6, 8),
            mediastinum: BBox::new(2, 2, 4, 8),
            trachea: BBox::new(3, 0, 5, 4),
        }
    }

    #[test]
    fn original_is_identity() {
        let img = ImageTensor::new(8, 8, (0..64).map(|i| i as f64 / 63.0).collect()).unwrap();
        let out = apply_bbox_variant(&img, &boxes8(), AugmentVariant::Original, 1).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn trachea_zero_counts() {
        let img = ImageTensor::filled(8, 8, 1.0).unwrap();
        let out = apply_bbox_variant(&img, &boxes8(), AugmentVariant::TracheaZero, 1).unwrap();
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        let ones = out.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!((zeros, ones), (8, 56));
    }

    #[test]
    fn background_masking_geometry() {
        let img = ImageTensor::filled(8, 8, 1.0).unwrap();
        let b = boxes8();
        let out = apply_bbox_variant(&img, &b, AugmentVariant::BgTracheaZero, 1).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let v = out.get(y, x);
                if x >= 6 || b.trachea.contains(x, y) {
                    assert_eq!(v, 0.0, "({x},{y})");
                } else {
                    assert_eq!(v, 1.0, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn noise_is_seeded_and_eight_bit() {
        let img = ImageTensor::filled(8, 8, 128.0 / 255.0).unwrap();
        let a = apply_bbox_variant(&img, &boxes8(), AugmentVariant::BgTracheaNoise, 9).unwrap();
        let b = apply_bbox_variant(&img, &boxes8(), AugmentVariant::BgTracheaNoise, 9).unwrap();
        let c = apply_bbox_variant(&img, &boxes8(), AugmentVariant::BgTracheaNoise, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.is_8bit_exact());
    }

    #[test]
    fn out_of_bounds_box_errors() {
        let img = ImageTensor::filled(8, 8, 0.5).unwrap();
        let mut b = boxes8();
        b.trachea = BBox::new(3, 0, 9, 4);
        assert!(apply_bbox_variant(&img, &b, AugmentVariant::TracheaZero, 0).is_err());
    }

    #[test]
    fn online_identity_and_clamp() {
        let img = ImageTensor::filled(8, 8, 0.99).unwrap();
        assert_eq!(OnlineAugment::IDENTITY.apply(&img), img);
        let bright = OnlineAugment {
            flip: false,
            delta: 0.05,
        }
        .apply(&img);
        assert!(bright.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn flip_is_involution() {
        let img = ImageTensor::new(8, 8, (0..64).map(|i| i as f64 / 63.0).collect()).unwrap();
        let once = flip_lr(&img);
        assert_ne!(once, img);
        assert_eq!(once.get(0, 0), img.get(0, 7));
        assert_eq!(flip_lr(&once), img);
    }

    #[test]
    fn online_augment_stays_in_range() {
        let mut rng = rng_from_seed(3);
        let img = ImageTensor::new(8, 8, (0..64).map(|i| i as f64 / 63.0).collect()).unwrap();
        let mut flips = 0;
        for _ in 0..200 {
            let a = OnlineAugment::sample(&mut rng);
            assert!((0.0..=MAX_BRIGHTNESS_DELTA).contains(&a.delta));
            flips += a.flip as usize;
            let out = a.apply(&img);
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!((60..140).contains(&flips));
        let _ = online_augment(&img, &mut rng);
    }
}
