//! Experiment configuration: one JSON document plus `--set` overrides.

use super::CliError;
use crate::camera::CameraArraySpec;
use crate::fusion::FusionConfig;
use crate::scenegen::SceneParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationParams {
    pub iou_threshold: f64,
    pub top_k: Option<usize>,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        EvaluationParams {
            iou_threshold: crate::deteval::DEFAULT_IOU_THRESHOLD,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stochastic stage derives its own seed from it.
    pub seed: u64,
    pub scene: SceneParams,
    pub array: CameraArraySpec,
    /// Heights (metres) of the horizontal focal planes to refocus on.
    pub focal_planes: Vec<f64>,
    /// Focal plane whose integral images are fused.
    pub fuse_plane: f64,
    pub fusion: FusionConfig,
    pub evaluation: EvaluationParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            scene: SceneParams::default(),
            array: CameraArraySpec::default(),
            focal_planes: vec![0.0, 2.0, 4.0, 8.0],
            fuse_plane: 0.0,
            fusion: FusionConfig::default(),
            evaluation: EvaluationParams::default(),
        }
    }
}

/// Stable per-stage seed: the first 8 bytes (little endian) of
/// `SHA-256(label || master_le)`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(master.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::config(format!("--set {key}: '{part}' is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::config(format!("--set {key}: index {idx} out of range (len {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::config(format!(
                    "--set {key}: '{part}' is not inside an object or array"
                )))
            }
        };
    }
    Err(CliError::config("--set needs a non-empty key".to_string()))
}

impl ExperimentConfig {
    /// Defaults, then `path` (if any), then each `key=value` override.
    /// Values parse as JSON when possible and as plain strings otherwise.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                let file: ExperimentConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                serde_json::to_value(file).expect("config serializes")
            }
            None => serde_json::to_value(ExperimentConfig::default()).expect("config serializes"),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects key=value, got '{o}'")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key.trim(), value)?;
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.array
            .validate()
            .map_err(|e| CliError::config(format!("array: {e}")))?;
        self.fusion
            .validate()
            .map_err(|e| CliError::config(format!("fusion: {e}")))?;
        if self.focal_planes.is_empty() {
            return Err(CliError::config("focal_planes must not be empty".into()));
        }
        for &h in self.focal_planes.iter().chain([&self.fuse_plane]) {
            if !h.is_finite() || h >= self.array.altitude {
                return Err(CliError::config(format!(
                    "focal plane height {h} must be finite and below the camera altitude {}",
                    self.array.altitude
                )));
            }
        }
        let t = self.evaluation.iou_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(CliError::config(format!(
                "evaluation.iou_threshold {t} must lie in (0, 1]"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
