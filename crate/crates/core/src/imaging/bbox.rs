use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open pixel box `[x0, x1) x [y0, y1)`, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl From<[usize; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [usize; 4]) -> Self {
        Self { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [usize; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn check(&self, name: &str, width: usize, height: usize) -> Result<()> {
        if self.x0 < self.x1 && self.x1 <= width && self.y0 < self.y1 && self.y1 <= height {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{name} box {:?} invalid for {width}x{height} image",
                <[usize; 4]>::from(*self)
            )))
        }
    }
}

/// The four anatomical boxes of a frontal chest radiograph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBoxSet {
    pub left_lung: BBox,
    pub right_lung: BBox,
    pub mediastinum: BBox,
    pub trachea: BBox,
}

impl BBoxSet {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        self.left_lung.check("left_lung", width, height)?;
        self.right_lung.check("right_lung", width, height)?;
        self.mediastinum.check("mediastinum", width, height)?;
        self.trachea.check("trachea", width, height)
    }

    /// Pixel lies in the anatomy kept by background masking (lungs or mediastinum).
    #[inline]
    pub fn in_anatomy(&self, x: usize, y: usize) -> bool {
        self.left_lung.contains(x, y)
            || self.right_lung.contains(x, y)
            || self.mediastinum.contains(x, y)
    }

    /// Fixed fractional layout of a frontal film (patient right on image left).
    pub fn canonical(width: usize, height: usize) -> Self {
        let b = |x0: f64, y0: f64, x1: f64, y1: f64| {
            BBox::new(
                (x0 * width as f64) as usize,
                (y0 * height as f64) as usize,
                (x1 * width as f64) as usize,
                (y1 * height as f64) as usize,
            )
        };
        Self {
            right_lung: b(0.10, 0.15, 0.45, 0.85),
            left_lung: b(0.55, 0.15, 0.90, 0.85),
            mediastinum: b(0.40, 0.30, 0.60, 0.90),
            trachea: b(0.45, 0.0, 0.55, 0.35),
        }
    }

    pub fn regions(&self) -> [(&'static str, BBox); 4] {
        [
            ("left_lung", self.left_lung),
            ("right_lung", self.right_lung),
            ("mediastinum", self.mediastinum),
            ("trachea", self.trachea),
        ]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
