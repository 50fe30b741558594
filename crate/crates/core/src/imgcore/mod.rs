//! Raster data model shared by every stage of the pipeline.
//!
//! Images are single-channel, row-major, `f64` intensities nominally in
//! `[0, 1]`. Pixel `(x, y)` sits at the integer coordinate `(u, v) = (x, y)`,
//! origin top-left, `+u` right and `+v` down.

mod bbox;
mod io;

pub use bbox::BBoxPx;
pub use io::{read_image, read_image_as, write_image};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("data length {len} does not match {width}x{height}")]
    LengthMismatch { width: usize, height: usize, len: usize },
    #[error("non-finite intensity at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("invalid bounding box [{0}, {1}, {2}, {3}]: need finite x_min < x_max and y_min < y_max")]
    InvalidBox(f64, f64, f64, f64),
    #[error("{path}: unsupported or corrupt image ({reason})")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: unsupported bit depth or color type {found} (expected 8/16-bit grayscale)")]
    UnsupportedDepth { path: PathBuf, found: String },
    #[error("{path}: image dimensions {width}x{height} overflow")]
    DimensionOverflow { path: PathBuf, width: u64, height: u64 },
    #[error("{path}: unsupported file extension (expected .png or .pgm)")]
    UnsupportedFormat { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What an [`ImagePlane`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Visible,
    Thermal,
    Fused,
    Weight,
}

impl Channel {
    /// Filename suffix used on disk, e.g. `view_000_thm.png`.
    pub fn suffix(self) -> &'static str {
        match self {
            Channel::Visible => "vis",
            Channel::Thermal => "thm",
            Channel::Fused => "fused",
            Channel::Weight => "weight",
        }
    }

    /// Infer the channel from a `*_vis`, `*_thm`, `*_fused` or `*_weight` stem.
    pub fn from_path(path: &std::path::Path) -> Option<Channel> {
        let stem = path.file_stem()?.to_str()?;
        let tag = stem.rsplit('_').next()?;
        match tag {
            "vis" => Some(Channel::Visible),
            "thm" => Some(Channel::Thermal),
            "fused" => Some(Channel::Fused),
            "weight" | "coverage" => Some(Channel::Weight),
            _ => None,
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "visible" | "vis" => Ok(Channel::Visible),
            "thermal" | "thm" => Ok(Channel::Thermal),
            "fused" => Ok(Channel::Fused),
            "weight" => Ok(Channel::Weight),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

/// Single-channel floating point raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channel: Channel,
    data: Vec<f64>,
}

impl ImagePlane {
    /// All-zero image.
    pub fn new(width: usize, height: usize, channel: Channel) -> Result<Self, ImageError> {
        Self::filled(width, height, channel, 0.0)
    }

    pub fn filled(width: usize, height: usize, channel: Channel, value: f64) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if !value.is_finite() {
            return Err(ImageError::NonFinite { x: 0, y: 0 });
        }
        Ok(ImagePlane {
            width,
            height,
            channel,
            data: vec![value; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, channel: Channel, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite {
                x: i % width,
                y: i / width,
            });
        }
        Ok(ImagePlane {
            width,
            height,
            channel,
            data,
        })
    }

    /// Build an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channel: Channel,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, channel, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Panics on a non-finite value so the finiteness invariant cannot be
    /// broken through the mutable API.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        assert!(value.is_finite(), "non-finite intensity at ({x}, {y})");
        self.data[y * self.width + x] = value;
    }

    pub fn same_dims(&self, other: &ImagePlane) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::SizeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Apply `f` to every pixel. Non-finite results are an error.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ImagePlane, ImageError> {
        Self::from_vec(
            self.width,
            self.height,
            self.channel,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn clamp_unit(&self) -> ImagePlane {
        ImagePlane {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs_diff(&self, other: &ImagePlane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear interpolation at a sub-pixel location.
    ///
    /// Returns `None` outside `[0, width-1] x [0, height-1]`; callers treat
    /// that as a zero-weight sample rather than clamping to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<f64> {
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if !(u >= 0.0 && u <= max_u && v >= 0.0 && v <= max_v) {
            return None;
        }
        let (x0, fx) = cell(u, self.width);
        let (y0, fy) = cell(v, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = lerp(self.get(x0, y0), self.get(x1, y0), fx);
        let bottom = lerp(self.get(x0, y1), self.get(x1, y1), fx);
        Some(lerp(top, bottom, fy))
    }
}

/// Lower cell index and fractional offset; the last grid line belongs to the
/// cell on its left so `frac == 1` lands exactly on it.
#[inline]
fn cell(coord: f64, len: usize) -> (usize, f64) {
    if len == 1 {
        return (0, 0.0);
    }
    let i = (coord.floor() as usize).min(len - 2);
    (i, coord - i as f64)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        (1.0 - t) * a + t * b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_samples_constant() {
        let img = ImagePlane::filled(9, 11, Channel::Visible, 0.5).unwrap();
        for &(u, v) in &[(0.3, 0.7), (4.5, 5.25), (7.99, 9.01), (8.0, 10.0)] {
            assert_eq!(img.sample_bilinear(u, v), Some(0.5));
        }
    }

    #[test]
    fn grid_points_are_exact() {
        let img = ImagePlane::from_fn(8, 10, Channel::Thermal, |x, y| (x * 31 + y * 7) as f64 / 400.0).unwrap();
        assert_eq!(img.sample_bilinear(3.0, 7.0), Some(img.get(3, 7)));
        assert_eq!(img.sample_bilinear(7.0, 9.0), Some(img.get(7, 9)));
        assert_eq!(img.sample_bilinear(0.0, 0.0), Some(img.get(0, 0)));
    }

    #[test]
    fn two_pixel_interpolation() {
        let img = ImagePlane::from_vec(2, 1, Channel::Visible, vec![0.0, 1.0]).unwrap();
        assert_eq!(img.sample_bilinear(0.25, 0.0), Some(0.25));
    }

    #[test]
    fn out_of_bounds_is_absent() {
        let img = ImagePlane::filled(4, 4, Channel::Visible, 1.0).unwrap();
        assert_eq!(img.sample_bilinear(-0.01, 1.0), None);
        assert_eq!(img.sample_bilinear(3.01, 1.0), None);
        assert_eq!(img.sample_bilinear(1.0, 3.5), None);
        assert_eq!(img.sample_bilinear(f64::NAN, 1.0), None);
    }

    #[test]
    fn single_pixel_image() {
        let img = ImagePlane::filled(1, 1, Channel::Visible, 0.7).unwrap();
        assert_eq!(img.sample_bilinear(0.0, 0.0), Some(0.7));
        assert_eq!(img.sample_bilinear(0.1, 0.0), None);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            ImagePlane::from_vec(2, 2, Channel::Visible, vec![0.0; 3]),
            Err(ImageError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ImagePlane::from_vec(2, 1, Channel::Visible, vec![0.0, f64::NAN]),
            Err(ImageError::NonFinite { x: 1, y: 0 })
        ));
        assert!(ImagePlane::new(0, 3, Channel::Visible).is_err());
    }

    #[test]
    fn channel_from_filename() {
        use std::path::Path;
        assert_eq!(
            Channel::from_path(Path::new("a/view_003_thm.png")),
            Some(Channel::Thermal)
        );
        assert_eq!(Channel::from_path(Path::new("x_vis.pgm")), Some(Channel::Visible));
        assert_eq!(
            Channel::from_path(Path::new("integral_fused.png")),
            Some(Channel::Fused)
        );
        assert_eq!(Channel::from_path(Path::new("plain.png")), None);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bilinear_bounded_by_neighbours(
                vals in proptest::collection::vec(0.0f64..1.0, 20),
                u in 0.0f64..4.0,
                v in 0.0f64..3.0,
            ) {
                let img = ImagePlane::from_vec(5, 4, Channel::Visible, vals).unwrap();
                let s = img.sample_bilinear(u, v).unwrap();
                let x0 = (u.floor() as usize).min(3);
                let y0 = (v.floor() as usize).min(2);
                let n = [img.get(x0, y0), img.get(x0 + 1, y0), img.get(x0, y0 + 1), img.get(x0 + 1, y0 + 1)];
                let lo = n.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(s >= lo - 1e-15 && s <= hi + 1e-15);
            }
        }
    }
}
