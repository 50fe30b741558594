//! Laplacian pyramid with the binomial [1, 4, 6, 4, 1] / 16 kernel.
//!
//! Borders use reflect-101 padding (`dcb|abcd|cba`). Downsampling keeps even
//! pixels, so level `k` is `ceil(w / 2^k) x ceil(h / 2^k)`. Upsampling
//! zero-inserts, blurs and multiplies by 4. Each detail level stores the
//! exact residual against the upsampled coarser level, which makes
//! reconstruction exact up to rounding.

use super::FusionError;
use crate::imgcore::{Channel, ImagePlane};

const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Smallest side length allowed at the coarsest level.
pub const MIN_BASE_SIDE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    levels: Vec<ImagePlane>,
    base: ImagePlane,
}

fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i > last {
            i = 2 * last - i;
        } else {
            return i as usize;
        }
    }
}

fn half(n: usize) -> usize {
    n.div_ceil(2)
}

/// Separable 5-tap blur on a raw row-major buffer.
fn blur(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = KERNEL
                .iter()
                .enumerate()
                .map(|(k, c)| c * row[reflect101(x as isize + k as isize - 2, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = KERNEL
                .iter()
                .enumerate()
                .map(|(k, c)| c * tmp[reflect101(y as isize + k as isize - 2, h) * w + x])
                .sum();
        }
    }
    out
}

fn downsample(img: &ImagePlane) -> ImagePlane {
    let (w, h) = img.dims();
    let b = blur(img.data(), w, h);
    let (nw, nh) = (half(w), half(h));
    ImagePlane::from_fn(nw, nh, img.channel(), |x, y| b[2 * y * w + 2 * x]).expect("downsampled dims are positive")
}

/// Expand `img` to `w x h`; `img` must be `ceil(w/2) x ceil(h/2)`.
fn upsample(img: &ImagePlane, w: usize, h: usize) -> ImagePlane {
    let mut z = vec![0.0; w * h];
    for y in 0..img.height() {
        for x in 0..img.width() {
            z[2 * y * w + 2 * x] = img.get(x, y);
        }
    }
    let data = blur(&z, w, h).into_iter().map(|v| 4.0 * v).collect();
    ImagePlane::from_vec(w, h, img.channel(), data).expect("sizes agree")
}

fn subtract(a: &ImagePlane, b: &ImagePlane) -> ImagePlane {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    ImagePlane::from_vec(a.width(), a.height(), a.channel(), data).expect("sizes agree")
}

fn add(a: &ImagePlane, b: &ImagePlane) -> ImagePlane {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    ImagePlane::from_vec(a.width(), a.height(), a.channel(), data).expect("sizes agree")
}

impl Pyramid {
    /// Assemble a pyramid from parts, checking that every level halves.
    pub fn new(levels: Vec<ImagePlane>, base: ImagePlane) -> Result<Self, FusionError> {
        let mut expect: Option<(usize, usize)> = None;
        for (k, l) in levels.iter().chain(std::iter::once(&base)).enumerate() {
            if let Some(d) = expect {
                if l.dims() != d {
                    return Err(FusionError::InconsistentPyramid(format!(
                        "level {k} is {:?}, expected {d:?}",
                        l.dims()
                    )));
                }
            }
            expect = Some((half(l.width()), half(l.height())));
        }
        Ok(Pyramid { levels, base })
    }

    pub fn decompose(img: &ImagePlane, depth: usize) -> Result<Self, FusionError> {
        let (w, h) = img.dims();
        let need = u32::try_from(depth)
            .ok()
            .and_then(|d| MIN_BASE_SIDE.checked_shl(d))
            .filter(|n| n.leading_zeros() > 0);
        if depth == 0 || need.is_none_or(|n| w.min(h) < n) {
            return Err(FusionError::PyramidTooDeep {
                depth,
                width: w,
                height: h,
            });
        }
        let mut levels = Vec::with_capacity(depth);
        let mut g = img.clone();
        for _ in 0..depth {
            let coarse = downsample(&g);
            levels.push(subtract(&g, &upsample(&coarse, g.width(), g.height())));
            g = coarse;
        }
        Ok(Pyramid { levels, base: g })
    }

    pub fn reconstruct(&self) -> ImagePlane {
        let mut g = self.base.clone();
        for l in self.levels.iter().rev() {
            g = add(&upsample(&g, l.width(), l.height()), l);
        }
        g
    }

    /// Detail levels, finest first.
    pub fn levels(&self) -> &[ImagePlane] {
        &self.levels
    }

    pub fn base(&self) -> &ImagePlane {
        &self.base
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn with_channel(self, channel: Channel) -> Self {
        Pyramid {
            levels: self.levels.into_iter().map(|l| l.with_channel(channel)).collect(),
            base: self.base.with_channel(channel),
        }
    }

    pub fn into_parts(self) -> (Vec<ImagePlane>, ImagePlane) {
        (self.levels, self.base)
    }
}

/// Sum of squared values.
pub fn energy(img: &ImagePlane) -> f64 {
    img.data().iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> ImagePlane {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        ImagePlane::from_fn(w, h, Channel::Visible, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap()
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(-2, 2), 0);
        assert_eq!(reflect101(3, 1), 0);
    }

    #[test]
    fn constant_image() {
        let img = ImagePlane::filled(37, 20, Channel::Thermal, 0.4).unwrap();
        let p = Pyramid::decompose(&img, 2).unwrap();
        assert_eq!(p.levels()[0].dims(), (37, 20));
        assert_eq!(p.levels()[1].dims(), (19, 10));
        assert_eq!(p.base().dims(), (10, 5));
        for l in p.levels() {
            assert!(l.data().iter().all(|v| v.abs() < 1e-15));
        }
        assert!(p.base().data().iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn round_trip() {
        for (w, h, d) in [(32, 32, 3), (33, 17, 2), (64, 40, 1)] {
            let img = noise(w, h, (w * h) as u64);
            let p = Pyramid::decompose(&img, d).unwrap();
            assert!(p.reconstruct().max_abs_diff(&img) < 1e-12);
        }
    }

    #[test]
    fn depth_limits() {
        let img = noise(32, 32, 1);
        assert!(Pyramid::decompose(&img, 3).is_ok());
        assert!(matches!(
            Pyramid::decompose(&img, 4),
            Err(FusionError::PyramidTooDeep { .. })
        ));
        assert!(Pyramid::decompose(&img, 0).is_err());
        assert!(Pyramid::decompose(&noise(31, 64, 1), 3).is_err());
    }

    #[test]
    fn zero_detail_pyramid_is_upsampled_base() {
        let base = noise(5, 4, 3);
        let levels = vec![
            ImagePlane::new(18, 13, Channel::Visible).unwrap(),
            ImagePlane::new(9, 7, Channel::Visible).unwrap(),
        ];
        let p = Pyramid::new(levels, base.clone()).unwrap();
        let expect = upsample(&upsample(&base, 9, 7), 18, 13);
        assert_eq!(p.reconstruct(), expect);
        let bad = vec![
            ImagePlane::new(18, 13, Channel::Visible).unwrap(),
            ImagePlane::new(8, 7, Channel::Visible).unwrap(),
        ];
        assert!(matches!(
            Pyramid::new(bad, base),
            Err(FusionError::InconsistentPyramid(_))
        ));
    }

    #[test]
    fn impulse_energy_sits_in_finest_level() {
        let mut img = ImagePlane::new(32, 32, Channel::Visible).unwrap();
        img.set(16, 16, 1.0);
        let p = Pyramid::decompose(&img, 3).unwrap();
        let e: Vec<f64> = p.levels().iter().map(energy).chain([energy(p.base())]).collect();
        let total: f64 = e.iter().sum();
        assert!(e[0] / total > 0.5, "{e:?}");
    }
}
