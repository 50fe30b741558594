use super::{derive_seed, CliError, ExperimentConfig};
use crate::aos::{background_region, integrate, ReferenceCamera, View, ViewSet, Weighting};
use crate::camera::{centroid_reference, CameraArrayFile, CameraArraySpec, ViewEntry, WorldPlane};
use crate::deteval::{self, GroundTruthRecord};
use crate::fusion::{mst_sr_fuse, FusionConfig};
use crate::imgcore::{read_image_as, write_image, BBoxPx, Channel, ImagePlane};
use crate::scenegen::{export_ground_truth, generate_scene, render_view, SceneDescription};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

// Pixels between a target box and the background box it is compared with.
const BACKGROUND_GAP_PX: f64 = 2.0;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::io(format!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(io_err(path, "no such file"))
    }
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    write_text(path, &text)
}

fn height_tag(h: f64) -> String {
    format!("{h:.2}")
}

/// Generate `scene.json` in `out`.
pub fn cmd_gen_scene(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(out)?;
    let scene = generate_scene(&cfg.scene, derive_seed(cfg.seed, "scene"))?;
    Ok(vec![write_text(&out.join("scene.json"), &scene.to_json())?])
}

/// Render both channels for every camera of `spec`.
///
/// Writes `view_NNN_vis.png`, `view_NNN_thm.png`, `cameras.json` and
/// `ground_truth.json` (one entry set per view plus `reference`, the
/// centroid camera integral images are rendered into).
pub fn cmd_render(scene: &Path, spec: &CameraArraySpec, seed: u64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_file(scene)?;
    let scene = SceneDescription::load(scene)?;
    ensure_dir(out)?;
    let intr = spec.intrinsics()?;
    let poses = spec.poses()?;
    let mut written = Vec::new();
    let mut entries = Vec::with_capacity(poses.len());
    let mut truth: Vec<GroundTruthRecord> = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        let id = format!("view_{i:03}");
        for ch in [Channel::Visible, Channel::Thermal] {
            let noise = derive_seed(seed, &format!("render/{}/{i}", ch.suffix()));
            let img = render_view(&scene, &intr, pose, ch, noise)?;
            let path = out.join(format!("{id}_{}.png", ch.suffix()));
            write_image(&img, &path)?;
            written.push(path);
        }
        entries.push(ViewEntry::new(pose, format!("{id}_vis.png"), format!("{id}_thm.png")));
        truth.extend(export_ground_truth(&scene, &intr, pose, &id));
    }
    let reference = centroid_reference(&poses).expect("array has at least one camera");
    truth.extend(export_ground_truth(&scene, &intr, &reference, "reference"));

    let cams = out.join("cameras.json");
    CameraArrayFile {
        intrinsics: intr,
        views: entries,
    }
    .save(&cams)
    .map_err(|e| io_err(&cams, e))?;
    written.push(cams);
    written.push(write_json(&out.join("ground_truth.json"), &truth)?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetVisibility {
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub background: Option<[f64; 4]>,
    pub visibility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneReport {
    pub height: f64,
    pub integral: String,
    pub coverage: String,
    pub valid_fraction: f64,
    pub targets: Vec<TargetVisibility>,
    pub mean_visibility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub channel: Channel,
    pub n_views: usize,
    pub planes: Vec<PlaneReport>,
    /// Height with the highest mean target visibility.
    pub best_height: Option<f64>,
}

fn load_views(dir: &Path, channel: Channel) -> Result<(ViewSet, ReferenceCamera), CliError> {
    let cams = dir.join("cameras.json");
    require_file(&cams)?;
    let file = CameraArrayFile::load(&cams)?;
    let poses = file.poses()?;
    let views = file
        .views
        .iter()
        .zip(&poses)
        .map(|(entry, pose)| {
            let rel = if channel == Channel::Visible {
                &entry.image_vis
            } else {
                &entry.image_thm
            };
            Ok(View {
                intrinsics: file.intrinsics,
                pose: *pose,
                image: read_image_as(dir.join(rel), channel)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let reference = ReferenceCamera {
        intrinsics: file.intrinsics,
        pose: centroid_reference(&poses).expect("camera file has views"),
    };
    Ok((ViewSet::new(views)?, reference))
}

/// Integral and coverage images per focal height, plus `sweep_report.json`.
///
/// Target visibility is scored when the view directory holds a
/// `ground_truth.json` with `reference` entries.
pub fn cmd_refocus(
    views: &Path,
    heights: &[f64],
    channel: Channel,
    out: &Path,
) -> Result<(SweepReport, Vec<PathBuf>), CliError> {
    if !matches!(channel, Channel::Visible | Channel::Thermal) {
        return Err(CliError::config(format!("cannot refocus channel {channel:?}")));
    }
    if heights.is_empty() {
        return Err(CliError::config("at least one focal height is required".into()));
    }
    let mut tags: Vec<String> = heights.iter().map(|&h| height_tag(h)).collect();
    tags.sort();
    tags.dedup();
    if tags.len() != heights.len() || heights.iter().any(|h| !h.is_finite()) {
        return Err(CliError::config(
            "focal heights must be finite and distinct at 0.01 m".into(),
        ));
    }

    let (set, reference) = load_views(views, channel)?;
    let gt_path = views.join("ground_truth.json");
    let targets: Vec<BBoxPx> = if gt_path.is_file() {
        deteval::load_ground_truth(&gt_path)?
            .into_iter()
            .filter(|g| g.image_id == "reference")
            .map(|g| g.bbox)
            .collect()
    } else {
        Vec::new()
    };
    let classes: Vec<String> = if gt_path.is_file() {
        deteval::load_ground_truth(&gt_path)?
            .into_iter()
            .filter(|g| g.image_id == "reference")
            .map(|g| g.class_label)
            .collect()
    } else {
        Vec::new()
    };
    ensure_dir(out)?;
    let (w, h) = (reference.intrinsics.width(), reference.intrinsics.height());

    let mut written = Vec::new();
    let mut planes = Vec::new();
    for &height in heights {
        let tag = height_tag(height);
        let integral = integrate(&set, &WorldPlane::horizontal(height), &reference, &Weighting::Uniform)?;
        let (img_name, cov_name) = (format!("integral_{tag}.png"), format!("coverage_{tag}.png"));
        write_image(&integral.image, out.join(&img_name))?;
        let n = integral.n_views as f64;
        write_image(&integral.coverage.map(|c| c / n)?, out.join(&cov_name))?;
        written.push(out.join(&img_name));
        written.push(out.join(&cov_name));

        let scored: Vec<TargetVisibility> = targets
            .iter()
            .zip(&classes)
            .map(|(t, class)| {
                let bg = background_region(t, &targets, w, h, BACKGROUND_GAP_PX);
                TargetVisibility {
                    class: class.clone(),
                    bbox: t.as_array(),
                    background: bg.map(|b| b.as_array()),
                    visibility: bg.and_then(|b| integral.visibility_score(t, &b).ok()),
                }
            })
            .collect();
        let vals: Vec<f64> = scored.iter().filter_map(|t| t.visibility).collect();
        planes.push(PlaneReport {
            height,
            integral: img_name,
            coverage: cov_name,
            valid_fraction: integral.valid_fraction(),
            mean_visibility: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
            targets: scored,
        });
    }
    let best_height = planes
        .iter()
        .filter_map(|p| p.mean_visibility.map(|v| (p.height, v)))
        .fold(None::<(f64, f64)>, |best, (h, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((h, v)),
        })
        .map(|(h, _)| h);
    let report = SweepReport {
        channel,
        n_views: set.len(),
        planes,
        best_height,
    };
    written.push(write_json(&out.join("sweep_report.json"), &report)?);
    Ok((report, written))
}

pub fn cmd_fuse(visible: &Path, thermal: &Path, cfg: &FusionConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let v = read_image_as(visible, Channel::Visible)?;
    let t = read_image_as(thermal, Channel::Thermal)?;
    let fused: ImagePlane = mst_sr_fuse(&v, &t, cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_image(&fused, out)?;
    Ok(vec![out.to_path_buf()])
}

fn emit(text: &str, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    match out {
        Some(p) => Ok(vec![write_text(p, text)?]),
        None => {
            print!("{text}");
            Ok(Vec::new())
        }
    }
}

pub fn cmd_evaluate(
    detections: &Path,
    ground_truth: &Path,
    iou: f64,
    top_k: Option<usize>,
    out: Option<&Path>,
    pr_csv: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let dets = deteval::load_detections(detections)?;
    let gts = deteval::load_ground_truth(ground_truth)?;
    let report = deteval::evaluate(&dets, &gts, iou, top_k)?;
    let mut written = emit(
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        out,
    )?;
    if let Some(csv) = pr_csv {
        deteval::write_pr_csv(&report, csv)?;
        written.push(csv.to_path_buf());
    }
    Ok(written)
}

#[derive(Serialize)]
struct ClassCount {
    class: String,
    count: usize,
}

pub fn cmd_class_stats(ground_truth: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let gts = deteval::load_ground_truth(ground_truth)?;
    let classes: Vec<ClassCount> = deteval::class_distribution(&gts)
        .into_iter()
        .map(|(class, count)| ClassCount { class, count })
        .collect();
    let doc = serde_json::json!({"total": gts.len(), "classes": classes});
    emit(&(serde_json::to_string_pretty(&doc).expect("serializes") + "\n"), out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<ManifestEntry>,
}

impl Manifest {
    /// Hash `files` and record them relative to `root`, sorted by path.
    pub fn build(root: &Path, files: &[PathBuf]) -> Result<Self, CliError> {
        let mut artifacts = files
            .iter()
            .map(|f| {
                let bytes = std::fs::read(f).map_err(|e| io_err(f, e))?;
                let rel = f.strip_prefix(root).unwrap_or(f);
                let path = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                Ok(ManifestEntry {
                    path,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Manifest { artifacts })
    }
}

/// gen-scene, render, refocus (both channels) and fuse under `out`, then
/// `manifest.json` with a hash of every artifact.
pub fn cmd_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut written = vec![write_text(&out.join("config.json"), &cfg.to_json())?];
    written.extend(cmd_gen_scene(cfg, out)?);

    let views = out.join("views");
    written.extend(cmd_render(&out.join("scene.json"), &cfg.array, cfg.seed, &views)?);

    let mut heights = cfg.focal_planes.clone();
    if !heights.iter().any(|&h| height_tag(h) == height_tag(cfg.fuse_plane)) {
        heights.push(cfg.fuse_plane);
    }
    let refocus = out.join("refocus");
    for (ch, name) in [(Channel::Thermal, "thermal"), (Channel::Visible, "visible")] {
        written.extend(cmd_refocus(&views, &heights, ch, &refocus.join(name))?.1);
    }

    let tag = height_tag(cfg.fuse_plane);
    let integral = format!("integral_{tag}.png");
    written.extend(cmd_fuse(
        &refocus.join("visible").join(&integral),
        &refocus.join("thermal").join(&integral),
        &cfg.fusion,
        &out.join("fused").join(format!("integral_{tag}_fused.png")),
    )?);

    let manifest = Manifest::build(out, &written)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
