//! Pinhole cameras, rigid poses and plane-induced reprojection.
//!
//! World frame: `z` up, ground at `z = 0`. Camera frame: `x` right, `y` down,
//! `z` along the optical axis. A [`Pose`] maps world points into the camera
//! frame, `X_c = R * X_w + t`.

mod array;
mod homography;

pub use array::{centroid_reference, CameraArrayFile, CameraArraySpec, ViewEntry};
pub use homography::{plane_homography, warp_to_reference, Homography};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Points closer than this to the camera plane (in metres) do not project.
pub const MIN_DEPTH: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-9;
const UNIT_NORMAL_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
    #[error("focal plane through camera center")]
    PlaneThroughCamera,
    #[error("singular homography (|det| = {0:e})")]
    SingularHomography(f64),
    #[error(transparent)]
    Image(#[from] crate::imgcore::ImageError),
    #[error("camera array {path}: {reason}")]
    ArrayFile { path: std::path::PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRaw", into = "IntrinsicsRaw")]
pub struct Intrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRaw {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<IntrinsicsRaw> for Intrinsics {
    type Error = CameraError;
    fn try_from(r: IntrinsicsRaw) -> Result<Self, Self::Error> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<Intrinsics> for IntrinsicsRaw {
    fn from(i: Intrinsics) -> Self {
        IntrinsicsRaw {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
        }
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, CameraError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(CameraError::InvalidIntrinsics("empty sensor".into()));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} sensor"
            )));
        }
        Ok(Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square pixels, principal point at the sensor centre `((w-1)/2, (h-1)/2)`.
    pub fn centered(focal_px: f64, width: usize, height: usize) -> Result<Self, CameraError> {
        Self::new(
            focal_px,
            focal_px,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidPose("non-finite entry".into()));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if gram_err > ORTHONORMAL_TOL {
            return Err(CameraError::InvalidPose(format!(
                "rotation is not orthonormal (max |R^T R - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(CameraError::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Pose { rotation, translation })
    }

    /// Row-major rotation and translation as stored in camera array files.
    pub fn from_slices(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self, CameraError> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::from_column_slice(translation),
        )
    }

    /// Camera at `center` looking straight down; image `+u` is world `+x`,
    /// image `+v` is world `-y`.
    pub fn nadir_at(center: Vector3<f64>) -> Self {
        let rotation = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        Pose {
            rotation,
            translation: -(rotation * center),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera centre in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// World-space direction of the ray through pixel `(u, v)` (not normalized).
    pub fn ray_direction(&self, intr: &Intrinsics, u: f64, v: f64) -> Vector3<f64> {
        let cam = Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
        self.rotation.transpose() * cam
    }
}

/// The plane `{x : normal . x = offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPlane {
    normal: Vector3<f64>,
    offset: f64,
}

impl WorldPlane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, CameraError> {
        if (normal.norm() - 1.0).abs() > UNIT_NORMAL_TOL || !offset.is_finite() {
            return Err(CameraError::InvalidPlane(format!(
                "normal must have unit length (|n| = {})",
                normal.norm()
            )));
        }
        Ok(WorldPlane { normal, offset })
    }

    /// Horizontal plane at height `z`.
    pub fn horizontal(z: f64) -> Self {
        WorldPlane {
            normal: Vector3::z(),
            offset: z,
        }
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Pinhole projection of a world point; `None` behind or on the camera plane.
pub fn project(intr: &Intrinsics, pose: &Pose, pt: &Vector3<f64>) -> Option<(f64, f64)> {
    let c = pose.to_camera(pt);
    if c.z <= MIN_DEPTH {
        return None;
    }
    Some((intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy))
}
