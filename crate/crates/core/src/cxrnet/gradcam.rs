use super::extractor::{CxrExtractor, FeatureExtractor};
use super::teacher::TeacherExtractor;
use super::train::TrainedCxrModel;
use crate::error::{Error, Result};
use crate::imaging::{bilinear_resize_raw, resize, ImageTensor};

pub const GRADCAM_THRESHOLD: f64 = 0.6;

/// Grad-CAM for one image: ReLU of the gradient-weighted channel sum of the
/// feature-layer maps, upsampled to the image size and min-max normalized.
/// A constant map normalizes to all zeros.
pub fn gradcam(model: &TrainedCxrModel, img: &ImageTensor) -> Result<ImageTensor> {
    let CxrExtractor::Teacher(t) = &model.extractor else {
        return Err(Error::Capability(
            "Grad-CAM needs a differentiable extractor; the reference extractor is not".into(),
        ));
    };
    let input = if img.dims() == t.input_size() { img.clone() } else { resize(img, t.input_size())? };
    let cache = t.forward(&input);
    let feats = TeacherExtractor::pool_features(&cache.maps);
    let dlogit = model.head.input_gradient(&feats);
    let maps = &cache.maps;
    let area = (maps.h * maps.w) as f64;
    let mut cam = vec![0.0; maps.h * maps.w];
    for c in 0..maps.c {
        let alpha = dlogit[c] / area;
        let plane = &maps.data[c * maps.h * maps.w..(c + 1) * maps.h * maps.w];
        cam.iter_mut().zip(plane).for_each(|(v, a)| *v += alpha * a);
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut up = bilinear_resize_raw(&cam, maps.h, maps.w, img.height(), img.width());
    let lo = up.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = up.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut up {
        *v = if hi > lo { ((*v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    }
    ImageTensor::new(img.height(), img.width(), up)
}

/// Pixelwise mean Grad-CAM over expired patients predicted above `threshold`.
pub fn gradcam_mean(
    model: &TrainedCxrModel,
    images: &[ImageTensor],
    labels: &[u8],
    probs: &[f64],
    threshold: f64,
) -> Result<ImageTensor> {
    if !model.extractor.differentiable() {
        return Err(Error::Capability("Grad-CAM needs a differentiable extractor".into()));
    }
    if images.len() != labels.len() || labels.len() != probs.len() {
        return Err(Error::InvalidInput("images, labels and probabilities must align".into()));
    }
    let selected: Vec<&ImageTensor> = (0..images.len())
        .filter(|&i| labels[i] == 1 && probs[i] > threshold)
        .map(|i| &images[i])
        .collect();
    let Some(first) = selected.first() else {
        return Err(Error::Precondition(format!(
            "no expired patient with probability above {threshold}"
        )));
    };
    let dims = first.dims();
    let mut sum = vec![0.0; dims.0 * dims.1];
    for img in &selected {
        if img.dims() != dims {
            return Err(Error::InvalidInput("selected images differ in size".into()));
        }
        let cam = gradcam(model, img)?;
        sum.iter_mut().zip(cam.data()).for_each(|(s, v)| *s += v);
    }
    let n = selected.len() as f64;
    ImageTensor::new(dims.0, dims.1, sum.into_iter().map(|s| (s / n).clamp(0.0, 1.0)).collect())
}
