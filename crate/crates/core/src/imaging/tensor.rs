use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 8;

/// Grayscale image with intensities in [0,1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::InvalidInput(format!(
                "image {height}x{width} smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Mutable access for in-crate transforms; callers keep values in [0,1].
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
        Self::new(h as usize, w as usize, data)
    }

    /// Quantize to 8 bits (round to nearest).
    pub fn to_gray(&self) -> GrayImage {
        let mut img = GrayImage::new(self.width as u32, self.height as u32);
        for (i, p) in img.pixels_mut().enumerate() {
            *p = Luma([(self.data[i] * 255.0).round() as u8]);
        }
        img
    }

    /// Read an 8-bit grayscale PNG or JPEG (colour inputs are converted to luma).
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        Self::from_gray(&img)
    }

    /// Write a lossless 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::artifact::write_atomic(path, &self.png_bytes()?)
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_gray().write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// True when every pixel is an exact multiple of 1/255, i.e. PNG storage is lossless.
    pub fn is_8bit_exact(&self) -> bool {
        self.data
            .iter()
            .all(|&v| ((v * 255.0).round() / 255.0) == v)
    }
}
