use super::{DetectionRecord, EvalError, EvaluationReport, GroundTruthRecord};
use serde::de::DeserializeOwned;
use serde_json::value::RawValue;
use std::io::Write;
use std::path::Path;

fn load_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let schema = |reason: String| EvalError::Schema {
        path: path.to_path_buf(),
        reason,
    };
    let entries: Vec<&RawValue> =
        serde_json::from_str(&text).map_err(|e| schema(format!("expected a JSON array: {e}")))?;
    entries
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            serde_json::from_str(raw.get()).map_err(|e| {
                // `raw` borrows from `text`, so its offset locates the entry.
                let offset = raw.get().as_ptr() as usize - text.as_ptr() as usize;
                let line = text[..offset].matches('\n').count() + 1;
                schema(format!("entry {i} (line {line}): {e}"))
            })
        })
        .collect()
}

/// JSON array of `{image_id, class, box: [x_min, y_min, x_max, y_max], score}`.
pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>, EvalError> {
    load_records(path.as_ref())
}

/// JSON array of `{image_id, class, box}`.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRecord>, EvalError> {
    load_records(path.as_ref())
}

/// One `class,recall,precision` row per PR point.
pub fn write_pr_csv(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    let io = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "class,recall,precision").map_err(io)?;
    for c in &report.classes {
        for [r, p] in &c.pr {
            writeln!(out, "{},{r},{p}", c.class).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
