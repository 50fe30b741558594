use super::{CameraError, Intrinsics, Pose};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk camera array: shared intrinsics plus one entry per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraArrayFile {
    pub intrinsics: Intrinsics,
    pub views: Vec<ViewEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    /// World-to-camera translation in metres.
    pub translation: [f64; 3],
    /// Paths relative to the camera file's directory.
    pub image_vis: String,
    pub image_thm: String,
}

impl ViewEntry {
    pub fn new(pose: &Pose, image_vis: String, image_thm: String) -> Self {
        ViewEntry {
            rotation: pose.rotation_row_major(),
            translation: pose.translation_array(),
            image_vis,
            image_thm,
        }
    }

    pub fn pose(&self) -> Result<Pose, CameraError> {
        Pose::from_slices(&self.rotation, &self.translation)
    }
}

impl CameraArrayFile {
    /// Parse and validate every rotation.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CameraError> {
        let path = path.as_ref();
        let fail = |reason: String| CameraError::ArrayFile {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let file: CameraArrayFile = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        if file.views.is_empty() {
            return Err(fail("no views".into()));
        }
        for (i, v) in file.views.iter().enumerate() {
            v.pose().map_err(|e| fail(format!("view {i}: {e}")))?;
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CameraError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("camera array serializes");
        std::fs::write(path, text + "\n").map_err(|e| CameraError::ArrayFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn poses(&self) -> Result<Vec<Pose>, CameraError> {
        self.views.iter().map(ViewEntry::pose).collect()
    }
}

/// Nadir camera at the centroid of the given camera centres.
pub fn centroid_reference(poses: &[Pose]) -> Option<Pose> {
    if poses.is_empty() {
        return None;
    }
    let sum = poses.iter().fold(Vector3::zeros(), |acc, p| acc + p.center());
    Some(Pose::nadir_at(sum / poses.len() as f64))
}

/// Regular grid of nadir cameras at a fixed altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraArraySpec {
    pub rows: usize,
    pub cols: usize,
    /// Distance between neighbouring cameras, metres.
    pub spacing: f64,
    pub altitude: f64,
    /// Grid centre on the ground, metres.
    pub center: [f64; 2],
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraArraySpec {
    fn default() -> Self {
        CameraArraySpec {
            rows: 4,
            cols: 4,
            spacing: 1.0,
            altitude: 40.0,
            center: [0.0, 0.0],
            focal_px: 320.0,
            width: 256,
            height: 256,
        }
    }
}

impl CameraArraySpec {
    pub fn intrinsics(&self) -> Result<Intrinsics, CameraError> {
        Intrinsics::centered(self.focal_px, self.width, self.height)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: &str| Err(CameraError::InvalidPose(m.to_string()));
        if self.rows == 0 || self.cols == 0 {
            return bad("camera grid must have at least one row and column");
        }
        if !(self.altitude.is_finite() && self.altitude > 0.0) {
            return bad("camera altitude must be positive");
        }
        if !(self.spacing.is_finite() && self.spacing >= 0.0) {
            return bad("camera spacing must be non-negative");
        }
        self.intrinsics().map(|_| ())
    }

    /// Poses in row-major grid order; row 0 is the northernmost (+y) row.
    pub fn poses(&self) -> Result<Vec<Pose>, CameraError> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.rows * self.cols);
        let half_c = (self.cols as f64 - 1.0) / 2.0;
        let half_r = (self.rows as f64 - 1.0) / 2.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let x = self.center[0] + (c as f64 - half_c) * self.spacing;
                let y = self.center[1] + (half_r - r as f64) * self.spacing;
                out.push(Pose::nadir_at(Vector3::new(x, y, self.altitude)));
            }
        }
        Ok(out)
    }

    /// Virtual nadir camera at the grid centre, same intrinsics as the views.
    pub fn reference_pose(&self) -> Pose {
        Pose::nadir_at(Vector3::new(self.center[0], self.center[1], self.altitude))
    }
}
