use super::tensor::{ImageTensor, MIN_SIDE};
use crate::error::{Error, Result};

/// Bilinear resampling of a row-major grid with corner alignment: output
/// corners map exactly onto input corners, and resizing to the same shape is
/// the identity.
pub fn bilinear_resize_raw(
    src: &[f64],
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), height * width);
    if out_h == height && out_w == width {
        return src.to_vec();
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|o| {
                let pos = if out == 1 || inp == 1 {
                    0.0
                } else {
                    o as f64 * (inp - 1) as f64 / (out - 1) as f64
                };
                let lo = (pos.floor() as usize).min(inp - 1);
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_h, height);
    let xs = axis(out_w, width);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * width + x0] * (1.0 - fx) + src[y0 * width + x1] * fx;
            let bot = src[y1 * width + x0] * (1.0 - fx) + src[y1 * width + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

pub fn resize(img: &ImageTensor, target: (usize, usize)) -> Result<ImageTensor> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::InvalidInput("zero-area resize target".into()));
    }
    if th < MIN_SIDE || tw < MIN_SIDE {
        return Err(Error::InvalidInput(format!(
            "resize target {th}x{tw} below {MIN_SIDE}x{MIN_SIDE}"
        )));
    }
    let mut data = bilinear_resize_raw(img.data(), img.height(), img.width(), th, tw);
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    ImageTensor::new(th, tw, data)
}
