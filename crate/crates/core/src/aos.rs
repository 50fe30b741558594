//! Airborne optical sectioning: synthetic-aperture integral images.
//!
//! Every view is reprojected onto a virtual reference camera through the
//! homography induced by a world focal plane, and the samples are averaged:
//!
//! ```text
//! I_F(u, v) = sum_i W_i(u, v) * I_i(H_i (u, v, 1)) / sum_i W_i(u, v)
//! ```
//!
//! `W_i` is binary: 1 where the reprojected sample falls inside view `i`
//! (optionally multiplied by a caller-supplied mask), 0 otherwise. Pixels no
//! view covers are marked invalid and hold 0.
//!
//! Accumulation runs over views in input order for every pixel, so output is
//! bit-identical regardless of the rayon thread count.

use crate::camera::{plane_homography, CameraError, Homography, Intrinsics, Pose, WorldPlane};
use crate::imgcore::{BBoxPx, Channel, ImageError, ImagePlane};
use rayon::prelude::*;

/// Guards the visibility score against a flat background.
pub const VISIBILITY_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum AosError {
    #[error("view set is empty")]
    EmptyViewSet,
    #[error("view {index} has channel {found:?}, expected {expected:?}")]
    ChannelMismatch {
        index: usize,
        expected: Channel,
        found: Channel,
    },
    #[error("view {index}: image is {image:?} but intrinsics describe {sensor:?}")]
    SensorMismatch {
        index: usize,
        image: (usize, usize),
        sensor: (usize, usize),
    },
    #[error("weight mask {index}: {reason}")]
    BadMask { index: usize, reason: String },
    #[error("region {0:?} is outside the {1}x{2} image")]
    RegionOutside([f64; 4], usize, usize),
    #[error("invalid regions: {0}")]
    BadRegions(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub image: ImagePlane,
}

/// Views sharing one channel; the discrete samples of the light field.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    views: Vec<View>,
}

impl ViewSet {
    pub fn new(views: Vec<View>) -> Result<Self, AosError> {
        let first = views.first().ok_or(AosError::EmptyViewSet)?.image.channel();
        for (index, v) in views.iter().enumerate() {
            if v.image.channel() != first {
                return Err(AosError::ChannelMismatch {
                    index,
                    expected: first,
                    found: v.image.channel(),
                });
            }
            let sensor = (v.intrinsics.width(), v.intrinsics.height());
            if v.image.dims() != sensor {
                return Err(AosError::SensorMismatch {
                    index,
                    image: v.image.dims(),
                    sensor,
                });
            }
        }
        Ok(ViewSet { views })
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn channel(&self) -> Channel {
        self.views[0].image.channel()
    }

    /// Same geometry with every intensity multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<ViewSet, AosError> {
        let views = self
            .views
            .iter()
            .map(|v| {
                Ok(View {
                    image: v.image.map(|x| alpha * x)?,
                    ..v.clone()
                })
            })
            .collect::<Result<Vec<_>, AosError>>()?;
        Ok(ViewSet { views })
    }
}

/// The virtual camera the integral image is rendered into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCamera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    /// `W_i` = 1 wherever view `i` covers the pixel.
    Uniform,
    /// Additionally multiply by one binary mask per view, given on the
    /// reference grid.
    Mask(Vec<ImagePlane>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    pub image: ImagePlane,
    /// Per-pixel `sum_i W_i`, in `[0, n_views]`.
    pub coverage: ImagePlane,
    pub valid: Vec<bool>,
    pub n_views: usize,
}

impl IntegralImage {
    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    /// [`visibility_score`] restricted to covered pixels.
    pub fn visibility_score(&self, target: &BBoxPx, background: &BBoxPx) -> Result<f64, AosError> {
        score_regions(&self.image, Some(&self.valid), target, background)
    }
}

fn check_masks(masks: &[ImagePlane], n: usize, dims: (usize, usize)) -> Result<(), AosError> {
    if masks.len() != n {
        return Err(AosError::BadMask {
            index: masks.len().min(n),
            reason: format!("expected {n} masks, got {}", masks.len()),
        });
    }
    for (index, m) in masks.iter().enumerate() {
        if m.dims() != dims {
            return Err(AosError::BadMask {
                index,
                reason: format!("size {:?} differs from reference {:?}", m.dims(), dims),
            });
        }
        if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(AosError::BadMask {
                index,
                reason: "mask values must be 0 or 1".into(),
            });
        }
    }
    Ok(())
}

/// Synthetic-aperture integral image focused on `plane`.
pub fn integrate(
    views: &ViewSet,
    plane: &WorldPlane,
    reference: &ReferenceCamera,
    weighting: &Weighting,
) -> Result<IntegralImage, AosError> {
    let (w, h) = (reference.intrinsics.width(), reference.intrinsics.height());
    let masks = match weighting {
        Weighting::Uniform => None,
        Weighting::Mask(m) => {
            check_masks(m, views.len(), (w, h))?;
            Some(m.as_slice())
        }
    };
    let homographies: Vec<Homography> = views
        .views
        .iter()
        .map(|v| plane_homography(&v.intrinsics, &v.pose, plane, &reference.intrinsics, &reference.pose))
        .collect::<Result<_, _>>()?;

    let rows: Vec<Vec<(f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let mut sum = 0.0;
                    let mut weight = 0.0;
                    for (i, (view, hom)) in views.views.iter().zip(&homographies).enumerate() {
                        let wi = masks.map_or(1.0, |m| m[i].get(x, y));
                        if wi == 0.0 {
                            continue;
                        }
                        if let Some(s) = hom
                            .map(x as f64, y as f64)
                            .and_then(|(u, v)| view.image.sample_bilinear(u, v))
                        {
                            sum += wi * s;
                            weight += wi;
                        }
                    }
                    (sum, weight)
                })
                .collect()
        })
        .collect();

    let mut data = Vec::with_capacity(w * h);
    let mut coverage = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (sum, weight) in rows.into_iter().flatten() {
        let ok = weight > 0.0;
        data.push(if ok { sum / weight } else { 0.0 });
        coverage.push(weight);
        valid.push(ok);
    }
    Ok(IntegralImage {
        image: ImagePlane::from_vec(w, h, views.channel(), data)?,
        coverage: ImagePlane::from_vec(w, h, Channel::Weight, coverage)?,
        valid,
        n_views: views.len(),
    })
}

/// One uniform-weight integral image per focal plane.
pub fn focal_sweep(
    views: &ViewSet,
    planes: &[WorldPlane],
    reference: &ReferenceCamera,
) -> Result<Vec<IntegralImage>, AosError> {
    planes
        .iter()
        .map(|p| integrate(views, p, reference, &Weighting::Uniform))
        .collect()
}

/// Target contrast against background clutter:
/// `|mean(target) - mean(background)| / (std(background) + eps)`.
///
/// Regions are closed pixel-centre boxes; they must lie inside the image and
/// must not overlap.
pub fn visibility_score(img: &ImagePlane, target: &BBoxPx, background: &BBoxPx) -> Result<f64, AosError> {
    score_regions(img, None, target, background)
}

fn region_values(img: &ImagePlane, valid: Option<&[bool]>, region: &BBoxPx) -> Result<Vec<f64>, AosError> {
    let (w, h) = img.dims();
    let inside = region.x_min() >= 0.0
        && region.y_min() >= 0.0
        && region.x_max() <= (w - 1) as f64
        && region.y_max() <= (h - 1) as f64;
    if !inside {
        return Err(AosError::RegionOutside(region.as_array(), w, h));
    }
    let (xs, ys) = region.pixel_range(w, h);
    let mut out = Vec::new();
    for y in ys {
        for x in xs.clone() {
            if valid.is_none_or(|m| m[y * w + x]) {
                out.push(img.get(x, y));
            }
        }
    }
    if out.is_empty() {
        return Err(AosError::BadRegions(format!(
            "region {:?} contains no valid pixel centre",
            region.as_array()
        )));
    }
    Ok(out)
}

fn score_regions(
    img: &ImagePlane,
    valid: Option<&[bool]>,
    target: &BBoxPx,
    background: &BBoxPx,
) -> Result<f64, AosError> {
    if target.intersection_area(background) > 0.0 {
        return Err(AosError::BadRegions("target and background overlap".into()));
    }
    let t = region_values(img, valid, target)?;
    let b = region_values(img, valid, background)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mt, mb) = (mean(&t), mean(&b));
    let var = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / b.len() as f64;
    Ok((mt - mb).abs() / (var.sqrt() + VISIBILITY_EPS))
}

/// A background box the size of `target`, `gap` pixels beside it, inside the
/// image and clear of `avoid`. Neighbours across the short side are tried
/// first (below, above), then right and left.
pub fn background_region(target: &BBoxPx, avoid: &[BBoxPx], width: usize, height: usize, gap: f64) -> Option<BBoxPx> {
    let (dx, dy) = (target.width() + gap, target.height() + gap);
    let vertical = [(0.0, dy), (0.0, -dy)];
    let horizontal = [(dx, 0.0), (-dx, 0.0)];
    let order = if dy <= dx {
        [vertical, horizontal]
    } else {
        [horizontal, vertical]
    };
    order
        .into_iter()
        .flatten()
        .filter_map(|(ox, oy)| target.translate(ox, oy).ok())
        .find(|b| {
            b.x_min() >= 0.0
                && b.y_min() >= 0.0
                && b.x_max() <= (width - 1) as f64
                && b.y_max() <= (height - 1) as f64
                && b.intersection_area(target) == 0.0
                && avoid.iter().all(|a| a.intersection_area(b) == 0.0)
        })
}
