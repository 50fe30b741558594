//! Visible/thermal fusion: Laplacian pyramid for the detail bands, sparse
//! coding over a cosine dictionary for the base band.
//!
//! Ties always go to the visible input.

mod pyramid;
mod sparse;

pub use pyramid::{energy, Pyramid, MIN_BASE_SIDE};
pub use sparse::{dct_dictionary, omp, omp_path, AtomDictionary, SparseCode};

use crate::imgcore::{Channel, ImageError, ImagePlane};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// Activities closer than this count as a tie for the patch mean.
const ACTIVITY_TIE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("pyramid depth {depth} too large for {width}x{height} image (coarsest side must stay >= 4)")]
    PyramidTooDeep { depth: usize, width: usize, height: usize },
    #[error("inconsistent pyramid: {0}")]
    InconsistentPyramid(String),
    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),
    #[error("signal has length {found}, dictionary atoms have {expected}")]
    SignalLength { expected: usize, found: usize },
    #[error("invalid fusion config: {0}")]
    Config(String),
    #[error("base layer is {width}x{height}, smaller than the {patch}x{patch} patch; lower depth or patch size")]
    BaseTooSmall { width: usize, height: usize, patch: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub depth: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub atoms_per_dim: usize,
    pub max_atoms: usize,
    pub tol: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            depth: 3,
            patch_size: 8,
            stride: 2,
            atoms_per_dim: 16,
            max_atoms: 8,
            tol: 1e-3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::Config(m));
        if self.depth == 0 {
            return bad("depth must be >= 1".into());
        }
        if self.patch_size == 0 {
            return bad("patch_size must be >= 1".into());
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return bad(format!("stride {} must be in 1..={}", self.stride, self.patch_size));
        }
        if self.atoms_per_dim < self.patch_size {
            return bad(format!(
                "atoms_per_dim {} must be >= patch_size {}",
                self.atoms_per_dim, self.patch_size
            ));
        }
        if self.max_atoms == 0 {
            return bad("max_atoms must be >= 1".into());
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return bad(format!("tol {} must be finite and >= 0", self.tol));
        }
        Ok(())
    }
}

/// Per pixel, the input with the larger magnitude.
pub fn fuse_detail_max(level_v: &ImagePlane, level_t: &ImagePlane) -> Result<ImagePlane, FusionError> {
    level_v.same_dims(level_t)?;
    let data = level_v
        .data()
        .iter()
        .zip(level_t.data())
        .map(|(&v, &t)| if v.abs() >= t.abs() { v } else { t })
        .collect();
    Ok(ImagePlane::from_vec(
        level_v.width(),
        level_v.height(),
        Channel::Fused,
        data,
    )?)
}

/// Window origins covering `0..len` with the last window flush to the edge.
fn window_starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut s: Vec<usize> = (0..=last).step_by(stride).collect();
    if *s.last().expect("len >= patch") != last {
        s.push(last);
    }
    s
}

fn patch_at(img: &ImagePlane, x0: usize, y0: usize, p: usize) -> Vec<f64> {
    let w = img.width();
    let d = img.data();
    (0..p)
        .flat_map(|y| d[(y0 + y) * w + x0..(y0 + y) * w + x0 + p].iter().copied())
        .collect()
}

/// Pick, per sliding patch, the source whose zero-mean sparse code has the
/// larger l1 activity, then average overlapping patches.
///
/// The chosen patch keeps its full zero-mean content, so coding residuals are
/// not lost. Its mean is the winner's mean, or the average of both when the
/// activities tie.
pub fn fuse_base_sr(
    base_v: &ImagePlane,
    base_t: &ImagePlane,
    dict: &AtomDictionary,
    stride: usize,
    max_atoms: usize,
    tol: f64,
) -> Result<ImagePlane, FusionError> {
    base_v.same_dims(base_t)?;
    let p = dict.patch_size();
    let (w, h) = base_v.dims();
    if w < p || h < p {
        return Err(FusionError::BaseTooSmall {
            width: w,
            height: h,
            patch: p,
        });
    }
    if stride == 0 || stride > p {
        return Err(FusionError::Config(format!("stride {stride} must be in 1..={p}")));
    }
    let xs = window_starts(w, p, stride);
    let ys = window_starts(h, p, stride);
    let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();

    let center = |mut v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
        (v, m)
    };
    let patches: Vec<Vec<f64>> = origins
        .par_iter()
        .map(|&(x0, y0)| {
            let (pv, mv) = center(patch_at(base_v, x0, y0, p));
            let (pt, mt) = center(patch_at(base_t, x0, y0, p));
            let av = omp(&pv, dict, max_atoms, tol)?.l1();
            let at = omp(&pt, dict, max_atoms, tol)?.l1();
            let (chosen, mean) = if (av - at).abs() <= ACTIVITY_TIE {
                (pv, 0.5 * (mv + mt))
            } else if av > at {
                (pv, mv)
            } else {
                (pt, mt)
            };
            Ok(chosen.into_iter().map(|c| c + mean).collect())
        })
        .collect::<Result<_, FusionError>>()?;

    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    for (&(x0, y0), patch) in origins.iter().zip(&patches) {
        for y in 0..p {
            for x in 0..p {
                let i = (y0 + y) * w + x0 + x;
                sum[i] += patch[y * p + x];
                count[i] += 1;
            }
        }
    }
    let data = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    Ok(ImagePlane::from_vec(w, h, Channel::Fused, data)?)
}

/// Full fusion: decompose, fuse bands, reconstruct, clamp to `[0, 1]`.
pub fn mst_sr_fuse(visible: &ImagePlane, thermal: &ImagePlane, cfg: &FusionConfig) -> Result<ImagePlane, FusionError> {
    cfg.validate()?;
    visible.same_dims(thermal)?;
    let dict = dct_dictionary(cfg.patch_size, cfg.atoms_per_dim)?;
    let (pv, pt) = rayon::join(
        || Pyramid::decompose(visible, cfg.depth),
        || Pyramid::decompose(thermal, cfg.depth),
    );
    let (pv, pt) = (pv?, pt?);
    let levels = pv
        .levels()
        .iter()
        .zip(pt.levels())
        .map(|(v, t)| fuse_detail_max(v, t))
        .collect::<Result<Vec<_>, _>>()?;
    let base = fuse_base_sr(pv.base(), pt.base(), &dict, cfg.stride, cfg.max_atoms, cfg.tol)?;
    Ok(Pyramid::new(levels, base)?.reconstruct().clamp_unit())
}
