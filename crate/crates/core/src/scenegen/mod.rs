//! Seeded procedural forest scenes and their multi-view renderings.
//!
//! Trees are vertical clusters of opaque horizontal discs ("leaves"); targets
//! are axis-aligned rectangles lying on the ground plane `z = 0`. Everything
//! is emissive with constant intensities, so every rendered pixel value is
//! exactly one of a handful of known values (before noise).

mod generate;
mod render;
mod texture;

pub use generate::{generate_scene, SceneParams, TargetPlacement, TargetTemplate};
pub use render::{export_ground_truth, render_view};
pub use texture::ground_texture;

use serde::{Deserialize, Serialize};
use std::path::Path;

/// Maximum rejected tree placements before generation gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("cannot satisfy separation: placed {placed} of {requested} trees after {attempts} attempts")]
    CannotSatisfySeparation {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("camera below ground (z = {0})")]
    CameraBelowGround(f64),
    #[error("cannot render channel {0:?}")]
    UnsupportedChannel(crate::imgcore::Channel),
    #[error("scene file {path}: {reason}")]
    File { path: std::path::PathBuf, reason: String },
    #[error(transparent)]
    Image(#[from] crate::imgcore::ImageError),
}

/// Ground rectangle in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extent {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

impl Default for Extent {
    fn default() -> Self {
        Extent {
            x_min: -16.0,
            y_min: -16.0,
            x_max: 16.0,
            y_max: 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub class_label: String,
    pub center: [f64; 2],
    /// `[length along x, width along y]` in metres.
    pub size: [f64; 2],
    pub visible_albedo: f64,
    pub thermal_intensity: f64,
}

impl TargetSpec {
    /// Ground-plane corners, counter-clockwise from `(x_min, y_min)`.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (hx, hy) = (self.size[0] / 2.0, self.size[1] / 2.0);
        let [cx, cy] = self.center;
        [
            [cx - hx, cy - hy],
            [cx + hx, cy - hy],
            [cx + hx, cy + hy],
            [cx - hx, cy + hy],
        ]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= self.size[0] / 2.0 && (y - self.center[1]).abs() <= self.size[1] / 2.0
    }
}

/// One tree: `leaves` holds the centre of every leaf disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    pub center: [f64; 2],
    /// `[z_min, z_max]` of the crown, metres above ground.
    pub height_band: [f64; 2],
    pub canopy_radius: f64,
    pub leaf_count: usize,
    pub leaf_radius: f64,
    pub leaf_albedo: f64,
    pub leaf_thermal: f64,
    pub leaves: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub extent: Extent,
    pub ground_texture_seed: u64,
    pub targets: Vec<TargetSpec>,
    pub occluders: Vec<OccluderSpec>,
    pub ambient_thermal: f64,
    pub noise_sigma: f64,
}

fn unit(name: &str, v: f64) -> Result<(), SceneError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SceneError::Invalid(format!("{name} = {v} outside [0, 1]")))
    }
}

impl SceneDescription {
    pub fn validate(&self) -> Result<(), SceneError> {
        let invalid = |m: String| Err(SceneError::Invalid(m));
        let e = &self.extent;
        if !(e.x_min < e.x_max && e.y_min < e.y_max) {
            return invalid("extent must have positive area".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return invalid(format!("noise_sigma = {} must be >= 0", self.noise_sigma));
        }
        unit("ambient_thermal", self.ambient_thermal)?;
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.size[0] > 0.0 && t.size[1] > 0.0) {
                return invalid(format!("target {i}: size components must be positive"));
            }
            unit("visible_albedo", t.visible_albedo)?;
            unit("thermal_intensity", t.thermal_intensity)?;
            if t.thermal_intensity <= self.ambient_thermal {
                return invalid(format!(
                    "target {i}: thermal_intensity {} must exceed ambient_thermal {}",
                    t.thermal_intensity, self.ambient_thermal
                ));
            }
            if t.corners().iter().any(|c| !e.contains(c[0], c[1])) {
                return invalid(format!("target {i} extends outside the scene extent"));
            }
        }
        for (i, o) in self.occluders.iter().enumerate() {
            let [z_min, z_max] = o.height_band;
            if !(z_max > z_min && z_min > 0.0) {
                return invalid(format!("occluder {i}: need z_max > z_min > 0"));
            }
            if !(o.canopy_radius > 0.0 && o.leaf_radius > 0.0) {
                return invalid(format!("occluder {i}: radii must be positive"));
            }
            if o.leaf_count == 0 || o.leaf_count != o.leaves.len() {
                return invalid(format!(
                    "occluder {i}: leaf_count {} must be >= 1 and match {} leaves",
                    o.leaf_count,
                    o.leaves.len()
                ));
            }
            unit("leaf_albedo", o.leaf_albedo)?;
            unit("leaf_thermal", o.leaf_thermal)?;
            if !e.contains(o.center[0], o.center[1]) {
                return invalid(format!("occluder {i} centre outside the scene extent"));
            }
            if o.leaves.iter().any(|l| l[2] < z_min || l[2] > z_max) {
                return invalid(format!("occluder {i}: leaf outside its height band"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| SceneError::File {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let fail = |reason: String| SceneError::File {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let scene: SceneDescription = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn leaf_total(&self) -> usize {
        self.occluders.iter().map(|o| o.leaves.len()).sum()
    }
}
