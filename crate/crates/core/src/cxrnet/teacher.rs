use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::extractor::FeatureExtractor;
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::rng::child_rng;

/// 3x3 convolution (stride 1, zero padding 1) + ReLU, optionally followed by
/// 2x2 average pooling. `weight` is laid out `[out][in][3][3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub pool: bool,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A small convolutional network loaded from an external weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvTeacher {
    pub input_size: (usize, usize),
    pub layers: Vec<ConvLayer>,
}

/// Feature maps: `c` channels of `h x w`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Maps {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
}

fn conv3x3(x: &Maps, layer: &ConvLayer) -> Maps {
    let (h, w) = (x.h, x.w);
    let mut out = Maps::zeros(layer.out_channels, h, w);
    for o in 0..layer.out_channels {
        let plane = &mut out.data[o * h * w..(o + 1) * h * w];
        plane.iter_mut().for_each(|v| *v = layer.bias[o]);
        for i in 0..layer.in_channels {
            let k = &layer.weight[(o * layer.in_channels + i) * 9..][..9];
            let src = &x.data[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = k[ky * 3 + kx];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let orow = &mut plane[y * w..(y + 1) * w];
                        let (xs, xe) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                        for xo in xs..xe {
                            orow[xo] += kv * srow[xo + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

fn avgpool2(a: &Maps) -> Maps {
    let (oh, ow) = (a.h / 2, a.w / 2);
    let mut out = Maps::zeros(a.c, oh, ow);
    for c in 0..a.c {
        for y in 0..oh {
            for x in 0..ow {
                out.data[(c * oh + y) * ow + x] = 0.25
                    * (a.at(c, 2 * y, 2 * x)
                        + a.at(c, 2 * y, 2 * x + 1)
                        + a.at(c, 2 * y + 1, 2 * x)
                        + a.at(c, 2 * y + 1, 2 * x + 1));
            }
        }
    }
    out
}

/// Intermediate values of one forward pass.
pub struct TeacherCache {
    inputs: Vec<Maps>,
    pre: Vec<Maps>,
    /// Output of the feature layer.
    pub maps: Maps,
}

impl ConvTeacher {
    /// Random He-initialized teacher, for tests and demonstrations.
    pub fn random(input_size: (usize, usize), channels: &[usize], seed: u64) -> Self {
        let mut in_c = 1;
        let layers = channels
            .iter()
            .enumerate()
            .map(|(l, &out_c)| {
                let mut rng = child_rng(seed, &[l as u64]);
                let limit = (6.0 / (in_c * 9) as f64).sqrt();
                let layer = ConvLayer {
                    in_channels: in_c,
                    out_channels: out_c,
                    pool: true,
                    weight: (0..out_c * in_c * 9)
                        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                        .collect(),
                    bias: vec![0.01; out_c],
                };
                in_c = out_c;
                layer
            })
            .collect();
        Self { input_size, layers }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: ConvTeacher = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("teacher has no layers".into()));
        }
        let mut c = 1;
        let (mut h, mut w) = self.input_size;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels != c
                || l.weight.len() != l.out_channels * l.in_channels * 9
                || l.bias.len() != l.out_channels
            {
                return Err(Error::InvalidInput(format!("teacher layer {i} has inconsistent shapes")));
            }
            if l.pool {
                h /= 2;
                w /= 2;
            }
            if h == 0 || w == 0 {
                return Err(Error::InvalidInput(format!("teacher layer {i} pools below 1x1")));
            }
            c = l.out_channels;
        }
        Ok(())
    }

    pub fn forward(&self, img: &ImageTensor, upto: usize) -> TeacherCache {
        let mut x = Maps {
            c: 1,
            h: img.height(),
            w: img.width(),
            data: img.data().to_vec(),
        };
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        for layer in &self.layers[..=upto] {
            let z = conv3x3(&x, layer);
            let mut a = z.clone();
            a.data.iter_mut().for_each(|v| *v = v.max(0.0));
            inputs.push(x);
            pre.push(z);
            x = if layer.pool { avgpool2(&a) } else { a };
        }
        TeacherCache { inputs, pre, maps: x }
    }

    /// Backpropagate `d_maps` (gradient w.r.t. the feature layer output) down
    /// to layer `from`, returning (dW, db) for layers `from..=upto`.
    pub fn backward(&self, cache: &TeacherCache, d_maps: Maps, from: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let upto = cache.pre.len() - 1;
        let mut grads = vec![(Vec::new(), Vec::new()); upto + 1 - from];
        let mut d_out = d_maps;
        for l in (from..=upto).rev() {
            let layer = &self.layers[l];
            let z = &cache.pre[l];
            let x = &cache.inputs[l];
            let (h, w) = (z.h, z.w);
            // Undo pooling, then the ReLU.
            let mut dz = Maps::zeros(z.c, h, w);
            for c in 0..z.c {
                for y in 0..h {
                    for xx in 0..w {
                        let g = if layer.pool {
                            let (py, px) = (y / 2, xx / 2);
                            if py < d_out.h && px < d_out.w {
                                0.25 * d_out.at(c, py, px)
                            } else {
                                0.0
                            }
                        } else {
                            d_out.at(c, y, xx)
                        };
                        let idx = (c * h + y) * w + xx;
                        dz.data[idx] = if z.data[idx] > 0.0 { g } else { 0.0 };
                    }
                }
            }
            let mut dw = vec![0.0; layer.weight.len()];
            let mut db = vec![0.0; layer.bias.len()];
            let mut dx = Maps::zeros(x.c, h, w);
            let need_dx = l > from;
            for o in 0..layer.out_channels {
                let dplane = &dz.data[o * h * w..(o + 1) * h * w];
                db[o] = dplane.iter().sum();
                for i in 0..layer.in_channels {
                    let base = (o * layer.in_channels + i) * 9;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let mut acc = 0.0;
                            let kv = layer.weight[base + ky * 3 + kx];
                            for y in 0..h {
                                let sy = y as isize + ky as isize - 1;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                let sy = sy as usize;
                                for xo in 0..w {
                                    let sx = xo as isize + kx as isize - 1;
                                    if sx < 0 || sx >= w as isize {
                                        continue;
                                    }
                                    let g = dplane[y * w + xo];
                                    acc += g * x.at(i, sy, sx as usize);
                                    if need_dx {
                                        dx.data[(i * h + sy) * w + sx as usize] += g * kv;
                                    }
                                }
                            }
                            dw[base + ky * 3 + kx] = acc;
                        }
                    }
                }
            }
            grads[l - from] = (dw, db);
            d_out = dx;
        }
        grads
    }
}

/// Configuration of a teacher-backed extractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherOptions {
    /// Layers `0..frozen_prefix` are never updated.
    pub frozen_prefix: usize,
    /// Layer whose globally pooled output is the feature vector; negative
    /// values count from the end.
    pub feature_layer: i64,
}

impl Default for TeacherOptions {
    fn default() -> Self {
        Self {
            frozen_prefix: usize::MAX,
            feature_layer: -1,
        }
    }
}

/// Differentiable extractor: global average pooling of one teacher layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherExtractor {
    pub teacher: ConvTeacher,
    pub frozen_prefix: usize,
    pub feature_layer: usize,
}

impl TeacherExtractor {
    pub fn new(teacher: ConvTeacher, opts: &TeacherOptions) -> Result<Self> {
        teacher.validate()?;
        let n = teacher.layers.len() as i64;
        let idx = if opts.feature_layer < 0 { n + opts.feature_layer } else { opts.feature_layer };
        if !(0..n).contains(&idx) {
            return Err(Error::InvalidInput(format!(
                "feature layer {} out of range for {n} layers",
                opts.feature_layer
            )));
        }
        Ok(Self {
            teacher,
            frozen_prefix: opts.frozen_prefix.min(idx as usize + 1),
            feature_layer: idx as usize,
        })
    }

    pub fn forward(&self, img: &ImageTensor) -> TeacherCache {
        self.teacher.forward(img, self.feature_layer)
    }

    pub fn pool_features(maps: &Maps) -> Vec<f64> {
        let n = (maps.h * maps.w) as f64;
        (0..maps.c)
            .map(|c| maps.data[c * maps.h * maps.w..(c + 1) * maps.h * maps.w].iter().sum::<f64>() / n)
            .collect()
    }

    /// Spread feature gradients back over the pooled maps.
    pub fn unpool_gradient(maps: &Maps, d_feat: &[f64]) -> Maps {
        let n = (maps.h * maps.w) as f64;
        let mut d = Maps::zeros(maps.c, maps.h, maps.w);
        for c in 0..maps.c {
            d.data[c * maps.h * maps.w..(c + 1) * maps.h * maps.w]
                .iter_mut()
                .for_each(|v| *v = d_feat[c] / n);
        }
        d
    }

    pub fn has_trainable_tail(&self) -> bool {
        self.frozen_prefix <= self.feature_layer
    }

    /// Gradients for the trainable tail given d loss / d features.
    pub fn tail_gradients(&self, cache: &TeacherCache, d_feat: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        if !self.has_trainable_tail() {
            return Vec::new();
        }
        let d = Self::unpool_gradient(&cache.maps, d_feat);
        self.teacher.backward(cache, d, self.frozen_prefix)
    }

    pub fn tail_params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let (from, to) = (self.frozen_prefix, self.feature_layer);
        if from > to {
            return Vec::new();
        }
        self.teacher.layers[from..=to]
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl FeatureExtractor for TeacherExtractor {
    fn input_size(&self) -> (usize, usize) {
        self.teacher.input_size
    }

    fn feature_dim(&self) -> usize {
        self.teacher.layers[self.feature_layer].out_channels
    }

    fn differentiable(&self) -> bool {
        true
    }

    fn trainable_tail_boundary(&self) -> Option<usize> {
        self.has_trainable_tail().then_some(self.frozen_prefix)
    }

    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        if img.dims() != self.input_size() {
            return Err(Error::InvalidInput(format!(
                "teacher expects {:?}, got {:?}",
                self.input_size(),
                img.dims()
            )));
        }
        Ok(Self::pool_features(&self.forward(img).maps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> ImageTensor {
        ImageTensor::new(16, 16, (0..256).map(|i| ((i * 53) % 101) as f64 / 100.0).collect()).unwrap()
    }

    #[test]
    fn frozen_extraction_is_bit_stable() {
        let t = TeacherExtractor::new(ConvTeacher::random((16, 16), &[4, 6, 8], 1), &TeacherOptions::default()).unwrap();
        assert!(!t.has_trainable_tail());
        let a = t.extract(&img()).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, t.extract(&img()).unwrap());
    }

    #[test]
    fn feature_layer_indexing() {
        let opts = TeacherOptions { frozen_prefix: 1, feature_layer: -2 };
        let t = TeacherExtractor::new(ConvTeacher::random((16, 16), &[4, 6, 8], 1), &opts).unwrap();
        assert_eq!(t.feature_layer, 1);
        assert_eq!(t.feature_dim(), 6);
        assert_eq!(t.trainable_tail_boundary(), Some(1));
        let bad = TeacherOptions { frozen_prefix: 0, feature_layer: -4 };
        assert!(TeacherExtractor::new(ConvTeacher::random((16, 16), &[4, 6, 8], 1), &bad).is_err());
    }

    #[test]
    fn tail_gradients_match_finite_differences() {
        let opts = TeacherOptions { frozen_prefix: 1, feature_layer: -1 };
        let t = TeacherExtractor::new(ConvTeacher::random((16, 16), &[3, 4, 5], 7), &opts).unwrap();
        let coef = [0.3, -1.2, 0.7, 0.25, -0.4];
        let f = |e: &TeacherExtractor| -> f64 {
            e.extract(&img()).unwrap().iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let cache = t.forward(&img());
        let grads = t.tail_gradients(&cache, &coef);
        assert_eq!(grads.len(), 2);
        for (gi, layer) in [1usize, 2].iter().enumerate() {
            for k in (0..t.teacher.layers[*layer].weight.len()).step_by(7) {
                let mut a = t.clone();
                let mut b = t.clone();
                a.teacher.layers[*layer].weight[k] += 1e-5;
                b.teacher.layers[*layer].weight[k] -= 1e-5;
                let fd = (f(&a) - f(&b)) / 2e-5;
                let an = grads[gi].0[k];
                assert!((fd - an).abs() / (fd.abs() + an.abs()).max(1e-7) < 1e-4, "layer {layer} k {k}: {fd} vs {an}");
            }
            for k in 0..t.teacher.layers[*layer].bias.len() {
                let mut a = t.clone();
                let mut b = t.clone();
                a.teacher.layers[*layer].bias[k] += 1e-5;
                b.teacher.layers[*layer].bias[k] -= 1e-5;
                let fd = (f(&a) - f(&b)) / 2e-5;
                let an = grads[gi].1[k];
                assert!((fd - an).abs() / (fd.abs() + an.abs()).max(1e-7) < 1e-4);
            }
        }
    }

    #[test]
    fn teacher_file_roundtrip() {
        let t = ConvTeacher::random((16, 16), &[2, 3], 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("teacher.json");
        std::fs::write(&p, serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(ConvTeacher::load(&p).unwrap(), t);
    }
}
