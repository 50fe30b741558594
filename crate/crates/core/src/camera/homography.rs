use super::{CameraError, Intrinsics, Pose, WorldPlane};
use crate::imgcore::{Channel, ImagePlane};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

const DEGENERATE_DISTANCE: f64 = 1e-9;
const SINGULAR_DET: f64 = 1e-12;

/// Maps homogeneous reference-image pixels to source-image pixels.
///
/// Matrices built by [`plane_homography`] are scaled so that the third
/// homogeneous coordinate equals `Z_src / depth_ref`: positive exactly when
/// the plane point lies in front of the source camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Homography(m)
    }

    /// Pure pixel translation `(u, v) -> (u + du, v + dv)`.
    pub fn translation(du: f64, dv: f64) -> Self {
        Homography(Matrix3::new(1.0, 0.0, du, 0.0, 1.0, dv, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Copy scaled to unit Frobenius norm with a non-negative `[2][2]`
    /// entry, for comparisons up to scale.
    pub fn normalized(&self) -> Matrix3<f64> {
        let m = self.0 / self.0.norm();
        if m[(2, 2)] < 0.0 {
            -m
        } else {
            m
        }
    }

    pub fn compose(&self, first: &Homography) -> Homography {
        Homography(self.0 * first.0)
    }

    /// `None` when the mapped point is at or behind the source camera.
    #[inline]
    pub fn map(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let q = self.0 * Vector3::new(u, v, 1.0);
        if q.z <= SINGULAR_DET {
            return None;
        }
        Some((q.x / q.z, q.y / q.z))
    }
}

/// Homography induced by `plane` from the reference camera to a source camera.
///
/// For any world point `X` on the plane visible in both cameras,
/// `project(src, X) ~ H * project(ref, X)`.
pub fn plane_homography(
    intr: &Intrinsics,
    pose: &Pose,
    plane: &WorldPlane,
    ref_intr: &Intrinsics,
    ref_pose: &Pose,
) -> Result<Homography, CameraError> {
    let c_ref = ref_pose.center();
    let c_src = pose.center();
    let ref_gap = -plane.signed_distance(&c_ref);
    if ref_gap.abs() < DEGENERATE_DISTANCE || plane.signed_distance(&c_src).abs() < DEGENERATE_DISTANCE {
        return Err(CameraError::PlaneThroughCamera);
    }
    // X = C_ref + lambda * w on the plane; dividing the source-camera
    // coordinates by lambda makes the map linear in the ref pixel.
    let baseline = (c_ref - c_src) * plane.normal().transpose() / ref_gap;
    let inner = Matrix3::identity() + baseline;
    let h = intr.matrix() * pose.rotation() * inner * ref_pose.rotation().transpose() * ref_intr.inverse_matrix();
    Ok(Homography(h))
}

/// Resample `src` onto a `width x height` reference grid through `h`.
///
/// Returns the warped image and a binary weight plane that is 1 where the
/// bilinear sample existed and 0 where it fell outside the source frame.
pub fn warp_to_reference(
    src: &ImagePlane,
    h: &Homography,
    width: usize,
    height: usize,
) -> Result<(ImagePlane, ImagePlane), CameraError> {
    let det = h.determinant();
    if det.is_nan() || det.abs() <= SINGULAR_DET {
        return Err(CameraError::SingularHomography(det));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut vals = vec![0.0; width];
            let mut wts = vec![0.0; width];
            for x in 0..width {
                if let Some(s) = h.map(x as f64, y as f64).and_then(|(u, v)| src.sample_bilinear(u, v)) {
                    vals[x] = s;
                    wts[x] = 1.0;
                }
            }
            (vals, wts)
        })
        .collect();
    let mut data = Vec::with_capacity(width * height);
    let mut weight = Vec::with_capacity(width * height);
    for (v, w) in rows {
        data.extend(v);
        weight.extend(w);
    }
    let img = ImagePlane::from_vec(width, height, src.channel(), data)?;
    let wt = ImagePlane::from_vec(width, height, Channel::Weight, weight)?;
    Ok((img, wt))
}
