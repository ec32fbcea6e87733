use serde::{Deserialize, Serialize};

use super::teacher::TeacherExtractor;
use crate::error::{Error, Result};
use crate::imaging::{resize, BBoxSet, ImageTensor};

/// Maps a radiograph of `input_size` to a fixed-length feature vector.
pub trait FeatureExtractor: Send + Sync {
    fn input_size(&self) -> (usize, usize);
    fn feature_dim(&self) -> usize;
    fn differentiable(&self) -> bool;

    /// First trainable layer, when part of the extractor can be fine-tuned.
    fn trainable_tail_boundary(&self) -> Option<usize> {
        None
    }

    /// Extract from an image already at `input_size`.
    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>>;

    /// Resize to `input_size` (a no-op at that size) and extract.
    fn extract_resized(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        if img.dims() == self.input_size() {
            self.extract(img)
        } else {
            self.extract(&resize(img, self.input_size())?)
        }
    }
}

pub const REFERENCE_GRID: usize = 16;
pub const DEFAULT_FEATURE_DIM: usize = 1024;

/// Non-learned extractor: 16x16 mean pooling plus per-region intensity
/// statistics over the canonical anatomy layout, repeated cyclically up to
/// `feature_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePatchExtractor {
    pub input_size: (usize, usize),
    pub feature_dim: usize,
}

impl Default for ReferencePatchExtractor {
    fn default() -> Self {
        Self {
            input_size: (64, 64),
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }
}

impl ReferencePatchExtractor {
    pub fn new(input_size: (usize, usize), feature_dim: usize) -> Result<Self> {
        if input_size.0 < REFERENCE_GRID || input_size.1 < REFERENCE_GRID {
            return Err(Error::InvalidInput(format!(
                "reference extractor needs input of at least {REFERENCE_GRID}x{REFERENCE_GRID}"
            )));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidInput("feature_dim must be positive".into()));
        }
        Ok(Self {
            input_size,
            feature_dim,
        })
    }

    fn base_features(&self, img: &ImageTensor) -> Vec<f64> {
        let (h, w) = img.dims();
        let g = REFERENCE_GRID;
        let mut out = Vec::with_capacity(g * g + 20);
        for gy in 0..g {
            let (y0, y1) = (gy * h / g, (gy + 1) * h / g);
            for gx in 0..g {
                let (x0, x1) = (gx * w / g, (gx + 1) * w / g);
                let mut s = 0.0;
                for y in y0..y1 {
                    s += img.data()[y * w + x0..y * w + x1].iter().sum::<f64>();
                }
                out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        let boxes = BBoxSet::canonical(w, h);
        let mut regions: Vec<Vec<f64>> = vec![Vec::new(); 5];
        for y in 0..h {
            for x in 0..w {
                let v = img.get(y, x);
                let mut inside = false;
                for (k, (_, b)) in boxes.regions().iter().enumerate() {
                    if b.contains(x, y) {
                        regions[k].push(v);
                        inside = true;
                    }
                }
                if !inside {
                    regions[4].push(v);
                }
            }
        }
        for r in &regions {
            if r.is_empty() {
                out.extend([0.0; 4]);
                continue;
            }
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let min = r.iter().copied().fold(f64::INFINITY, f64::min);
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.extend([mean, var.sqrt(), min, max]);
        }
        out
    }
}

impl FeatureExtractor for ReferencePatchExtractor {
    fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn differentiable(&self) -> bool {
        false
    }

    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        if img.dims() != self.input_size {
            return Err(Error::InvalidInput(format!(
                "extractor expects {:?}, got {:?}",
                self.input_size,
                img.dims()
            )));
        }
        let base = self.base_features(img);
        Ok((0..self.feature_dim).map(|k| base[k % base.len()]).collect())
    }
}

/// The extractor variants a CXR model can carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CxrExtractor {
    Reference(ReferencePatchExtractor),
    Teacher(TeacherExtractor),
}

impl CxrExtractor {
    fn inner(&self) -> &dyn FeatureExtractor {
        match self {
            CxrExtractor::Reference(e) => e,
            CxrExtractor::Teacher(e) => e,
        }
    }
}

impl FeatureExtractor for CxrExtractor {
    fn input_size(&self) -> (usize, usize) {
        self.inner().input_size()
    }

    fn feature_dim(&self) -> usize {
        self.inner().feature_dim()
    }

    fn differentiable(&self) -> bool {
        self.inner().differentiable()
    }

    fn trainable_tail_boundary(&self) -> Option<usize> {
        self.inner().trainable_tail_boundary()
    }

    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        self.inner().extract(img)
    }
}
