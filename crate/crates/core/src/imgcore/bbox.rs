use super::ImageError;
use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBoxPx {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBoxPx {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ImageError> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(ImageError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(BBoxPx {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area of the overlap, zero when the boxes are disjoint or only touch.
    pub fn intersection_area(&self, other: &BBoxPx) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clip to `[x_lo, x_hi] x [y_lo, y_hi]`; `None` if nothing with positive
    /// area remains.
    pub fn clip(&self, x_lo: f64, y_lo: f64, x_hi: f64, y_hi: f64) -> Option<BBoxPx> {
        BBoxPx::new(
            self.x_min.max(x_lo),
            self.y_min.max(y_lo),
            self.x_max.min(x_hi),
            self.y_max.min(y_hi),
        )
        .ok()
    }

    /// Smallest box containing every point, or `None` for a degenerate set.
    pub fn hull(points: &[(f64, f64)]) -> Option<BBoxPx> {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        BBoxPx::new(x0, y0, x1, y1).ok()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<BBoxPx, ImageError> {
        BBoxPx::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    /// Integer pixel centres inside the (closed) box, clipped to the raster.
    pub fn pixel_range(&self, width: usize, height: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let span = |lo: f64, hi: f64, n: usize| {
            let a = lo.ceil().max(0.0) as usize;
            let b = if hi < 0.0 { 0 } else { (hi.floor() as usize + 1).min(n) };
            a.min(b)..b
        };
        (
            span(self.x_min, self.x_max, width),
            span(self.y_min, self.y_max, height),
        )
    }
}

impl TryFrom<[f64; 4]> for BBoxPx {
    type Error = ImageError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBoxPx::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBoxPx> for [f64; 4] {
    fn from(b: BBoxPx) -> Self {
        b.as_array()
    }
}
