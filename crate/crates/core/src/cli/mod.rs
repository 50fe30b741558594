//! `canopy` command line: each subcommand reads and writes plain files so
//! stages can be rerun independently.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 I/O, 4 numerical or
//! geometric degeneracy. Errors go to stderr as
//! `{"error": {"kind": ..., "message": ...}}`.

mod commands;
mod config;

pub use commands::{
    cmd_class_stats, cmd_evaluate, cmd_fuse, cmd_gen_scene, cmd_pipeline, cmd_refocus, cmd_render, Manifest,
    ManifestEntry,
};
pub use config::{derive_seed, EvaluationParams, ExperimentConfig};

use crate::aos::AosError;
use crate::camera::CameraError;
use crate::deteval::EvalError;
use crate::fusion::FusionError;
use crate::imgcore::{Channel, ImageError};
use crate::scenegen::SceneError;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numerical,
}

impl ErrorKind {
    fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message,
        }
    }

    pub fn io(message: String) -> Self {
        CliError {
            kind: ErrorKind::Io,
            message,
        }
    }

    pub fn numerical(message: String) -> Self {
        CliError {
            kind: ErrorKind::Numerical,
            message,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({"error": {"kind": self.kind.name(), "message": self.message}}).to_string()
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        let m = e.to_string();
        match e {
            ImageError::Io { .. }
            | ImageError::Corrupt { .. }
            | ImageError::UnsupportedDepth { .. }
            | ImageError::DimensionOverflow { .. } => CliError::io(m),
            ImageError::NonFinite { .. } => CliError::numerical(m),
            _ => CliError::config(m),
        }
    }
}

impl From<CameraError> for CliError {
    fn from(e: CameraError) -> Self {
        let m = e.to_string();
        match e {
            CameraError::PlaneThroughCamera | CameraError::SingularHomography(_) => CliError::numerical(m),
            CameraError::Image(i) => i.into(),
            _ => CliError::config(m),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        let m = e.to_string();
        match e {
            SceneError::CannotSatisfySeparation { .. } | SceneError::CameraBelowGround(_) => CliError::numerical(m),
            SceneError::Image(i) => i.into(),
            _ => CliError::config(m),
        }
    }
}

impl From<AosError> for CliError {
    fn from(e: AosError) -> Self {
        match e {
            AosError::Camera(c) => c.into(),
            AosError::Image(i) => i.into(),
            AosError::RegionOutside(..) | AosError::BadRegions(_) => CliError::numerical(e.to_string()),
            _ => CliError::config(e.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Image(i) => i.into(),
            _ => CliError::config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let m = e.to_string();
        match e {
            EvalError::Io { .. } => CliError::io(m),
            EvalError::NoDefinedAp => CliError::numerical(m),
            _ => CliError::config(m),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "canopy",
    version,
    about = "Synthetic-aperture imaging and visible/thermal fusion toolkit"
)]
pub struct Cli {
    /// Master seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, or output file for `fuse` and `evaluate`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `--set array.rows=2`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scene and write `scene.json`.
    GenScene(ConfigArgs),
    /// Render every camera of the array: view images, `cameras.json`, `ground_truth.json`.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Integral and coverage images for each focal plane, plus `sweep_report.json`.
    Refocus {
        /// Directory holding `cameras.json`.
        #[arg(long)]
        views: PathBuf,
        /// Focal plane heights in metres, comma separated.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        heights: Vec<f64>,
        #[arg(long, default_value = "thermal")]
        channel: Channel,
    },
    /// Fuse a visible and a thermal image of equal size.
    Fuse {
        #[arg(long)]
        visible: PathBuf,
        #[arg(long)]
        thermal: PathBuf,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Sparsity budget per patch.
        #[arg(long)]
        atoms: Option<usize>,
        /// Cosine frequencies per axis in the dictionary.
        #[arg(long)]
        atoms_per_dim: Option<usize>,
    },
    /// Score detections against ground truth; report JSON to `--out` or stdout.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = crate::deteval::DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Average only over the k classes with the most ground truth.
        #[arg(long)]
        top_k: Option<usize>,
        /// Also write PR points as CSV.
        #[arg(long)]
        pr_csv: Option<PathBuf>,
    },
    /// Ground-truth instance counts per class.
    ClassStats {
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// gen-scene, render, refocus and fuse in one go, plus `manifest.json`.
    Pipeline(ConfigArgs),
}

fn out_dir(out: &Option<PathBuf>, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_config(args: &ConfigArgs, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::resolve(args.config.as_deref(), &args.overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Run one parsed command; returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be >= 1".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let written = match &cli.command {
        Command::GenScene(args) => {
            let cfg = load_config(args, cli.seed)?;
            cmd_gen_scene(&cfg, &out_dir(&cli.out, "."))
        }
        Command::Render { scene, cfg } => {
            let cfg = load_config(cfg, cli.seed)?;
            cmd_render(scene, &cfg.array, cfg.seed, &out_dir(&cli.out, "views"))
        }
        Command::Refocus {
            views,
            heights,
            channel,
        } => cmd_refocus(views, heights, *channel, &out_dir(&cli.out, "refocus")).map(|r| r.1),
        Command::Fuse {
            visible,
            thermal,
            depth,
            patch,
            stride,
            atoms,
            atoms_per_dim,
        } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::config("fuse needs --out <file>".into()))?;
            let d = crate::fusion::FusionConfig::default();
            let patch_size = patch.unwrap_or(d.patch_size);
            let cfg = crate::fusion::FusionConfig {
                depth: depth.unwrap_or(d.depth),
                patch_size,
                stride: stride.unwrap_or(d.stride.min(patch_size)),
                atoms_per_dim: atoms_per_dim.unwrap_or(d.atoms_per_dim.max(2 * patch_size)),
                max_atoms: atoms.unwrap_or(d.max_atoms),
                tol: d.tol,
            };
            cmd_fuse(visible, thermal, &cfg, &out)
        }
        Command::Evaluate {
            detections,
            ground_truth,
            iou,
            top_k,
            pr_csv,
        } => cmd_evaluate(
            detections,
            ground_truth,
            *iou,
            *top_k,
            cli.out.as_deref(),
            pr_csv.as_deref(),
        ),
        Command::ClassStats { ground_truth } => cmd_class_stats(ground_truth, cli.out.as_deref()),
        Command::Pipeline(args) => {
            let cfg = load_config(args, cli.seed)?;
            let out = out_dir(&cli.out, "out");
            cmd_pipeline(&cfg, &out).map(|_| vec![out.join("manifest.json")])
        }
    }?;
    Ok(written)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("{}", CliError::config(e.to_string().trim_end().to_string()).to_json());
            }
            return code;
        }
    };
    match run(cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
