//! Detection scoring: IoU, greedy matching, precision/recall, AP and mAP.
//!
//! Matching is greedy in descending score order (ties broken by `image_id`,
//! then input order) with one-to-one assignment to the unmatched ground
//! truth box of highest IoU. AP integrates the monotone precision envelope
//! over every recall step (all-point interpolation).

mod io;

pub use io::{load_detections, load_ground_truth, write_pr_csv};

use crate::imgcore::BBoxPx;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {reason}")]
    Schema { path: std::path::PathBuf, reason: String },
    #[error("iou threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("no class has a defined average precision (no ground truth)")]
    NoDefinedAp,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRaw", into = "DetectionRaw")]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_label: String,
    pub bbox: BBoxPx,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRaw {
    image_id: String,
    class: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
}

impl TryFrom<DetectionRaw> for DetectionRecord {
    type Error = String;
    fn try_from(r: DetectionRaw) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(format!(
                "detection for image `{}`: score {} outside [0, 1]",
                r.image_id, r.score
            ));
        }
        let bbox = BBoxPx::try_from(r.bbox).map_err(|e| format!("detection for image `{}`: {e}", r.image_id))?;
        Ok(DetectionRecord {
            image_id: r.image_id,
            class_label: r.class,
            bbox,
            score: r.score,
        })
    }
}

impl From<DetectionRecord> for DetectionRaw {
    fn from(d: DetectionRecord) -> Self {
        DetectionRaw {
            image_id: d.image_id,
            class: d.class_label,
            bbox: d.bbox.as_array(),
            score: d.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthRaw", into = "GroundTruthRaw")]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub class_label: String,
    pub bbox: BBoxPx,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthRaw {
    image_id: String,
    class: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

impl TryFrom<GroundTruthRaw> for GroundTruthRecord {
    type Error = String;
    fn try_from(r: GroundTruthRaw) -> Result<Self, String> {
        let bbox = BBoxPx::try_from(r.bbox).map_err(|e| format!("ground truth for image `{}`: {e}", r.image_id))?;
        Ok(GroundTruthRecord {
            image_id: r.image_id,
            class_label: r.class,
            bbox,
        })
    }
}

impl From<GroundTruthRecord> for GroundTruthRaw {
    fn from(g: GroundTruthRecord) -> Self {
        GroundTruthRaw {
            image_id: g.image_id,
            class: g.class_label,
            bbox: g.bbox.as_array(),
        }
    }
}

pub fn iou(a: &BBoxPx, b: &BBoxPx) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMatch {
    pub is_tp: bool,
    /// Index into the ground-truth slice when matched.
    pub gt_index: Option<usize>,
    pub iou: f64,
}

/// Detection indices in evaluation order: score descending, then
/// `image_id` ascending, then input position.
pub fn processing_order(dets: &[DetectionRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then_with(|| dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });
    order
}

/// Label every detection TP or FP. The result is aligned with `dets`.
pub fn match_detections(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    iou_threshold: f64,
) -> Result<Vec<DetectionMatch>, EvalError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(EvalError::BadThreshold(iou_threshold));
    }
    let mut groups: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        groups
            .entry((g.image_id.as_str(), g.class_label.as_str()))
            .or_default()
            .push(i);
    }
    let mut taken = vec![false; gts.len()];
    let mut out = vec![
        DetectionMatch {
            is_tp: false,
            gt_index: None,
            iou: 0.0,
        };
        dets.len()
    ];
    for di in processing_order(dets) {
        let d = &dets[di];
        let Some(candidates) = groups.get(&(d.image_id.as_str(), d.class_label.as_str())) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &gi in candidates {
            if taken[gi] {
                continue;
            }
            let o = iou(&d.bbox, &gts[gi].bbox);
            if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        if let Some((gi, o)) = best {
            taken[gi] = true;
            out[di] = DetectionMatch {
                is_tp: true,
                gt_index: Some(gi),
                iou: o,
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PRCurve {
    /// `(recall, precision)` after each detection, in evaluation order.
    pub points: Vec<(f64, f64)>,
    pub n_gt: usize,
}

/// Cumulative precision/recall over TP/FP labels given in evaluation order.
/// With `n_gt == 0` recall is reported as 0.
pub fn pr_curve(labels: &[bool], n_gt: usize) -> PRCurve {
    let mut tp = 0usize;
    let points = labels
        .iter()
        .enumerate()
        .map(|(i, &is_tp)| {
            tp += is_tp as usize;
            let precision = tp as f64 / (i + 1) as f64;
            let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
            (recall, precision)
        })
        .collect();
    PRCurve { points, n_gt }
}

/// All-point interpolated AP; `None` when the class has no ground truth.
pub fn average_precision(curve: &PRCurve) -> Option<f64> {
    if curve.n_gt == 0 {
        return None;
    }
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (&(recall, _), &p) in curve.points.iter().zip(&envelope) {
        ap += (recall - prev_recall) * p;
        prev_recall = recall;
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: String,
    pub n_gt: usize,
    pub ap: Option<f64>,
}

/// Unweighted mean over classes with a defined AP. With `top_k`, only the
/// `k` classes with the most ground truth (ties by name) are considered.
pub fn mean_ap(per_class: &[ClassAp], top_k: Option<usize>) -> Result<f64, EvalError> {
    let mut pool: Vec<&ClassAp> = per_class.iter().collect();
    if let Some(k) = top_k {
        pool.sort_by(|a, b| b.n_gt.cmp(&a.n_gt).then_with(|| a.class.cmp(&b.class)));
        pool.truncate(k);
    }
    let defined: Vec<f64> = pool.iter().filter_map(|c| c.ap).collect();
    if defined.is_empty() {
        return Err(EvalError::NoDefinedAp);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: String,
    pub n_gt: usize,
    pub n_det: usize,
    pub tp: usize,
    pub fp: usize,
    pub ap: Option<f64>,
    /// `[recall, precision]` pairs.
    pub pr: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub iou_threshold: f64,
    pub top_k: Option<usize>,
    pub classes: Vec<ClassReport>,
    pub map: f64,
    /// Classes that have detections but no ground truth; their AP is undefined.
    pub classes_without_ground_truth: Vec<String>,
}

/// Full per-class evaluation.
pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    iou_threshold: f64,
    top_k: Option<usize>,
) -> Result<EvaluationReport, EvalError> {
    let matches = match_detections(dets, gts, iou_threshold)?;
    let order = processing_order(dets);
    let classes: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.class_label.as_str())
        .chain(gts.iter().map(|g| g.class_label.as_str()))
        .collect();

    let mut reports = Vec::new();
    let mut aps = Vec::new();
    let mut orphans = Vec::new();
    for class in classes {
        let labels: Vec<bool> = order
            .iter()
            .filter(|&&i| dets[i].class_label == class)
            .map(|&i| matches[i].is_tp)
            .collect();
        let n_gt = gts.iter().filter(|g| g.class_label == class).count();
        let curve = pr_curve(&labels, n_gt);
        let ap = average_precision(&curve);
        if ap.is_none() {
            orphans.push(class.to_string());
        }
        let tp = labels.iter().filter(|&&l| l).count();
        reports.push(ClassReport {
            class: class.to_string(),
            n_gt,
            n_det: labels.len(),
            tp,
            fp: labels.len() - tp,
            ap,
            pr: curve.points.iter().map(|&(r, p)| [r, p]).collect(),
        });
        aps.push(ClassAp {
            class: class.to_string(),
            n_gt,
            ap,
        });
    }
    let map = mean_ap(&aps, top_k)?;
    Ok(EvaluationReport {
        iou_threshold,
        top_k,
        classes: reports,
        map,
        classes_without_ground_truth: orphans,
    })
}

/// Ground-truth instance count per class, most frequent first.
pub fn class_distribution(gts: &[GroundTruthRecord]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for g in gts {
        *counts.entry(g.class_label.as_str()).or_default() += 1;
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().map(|(c, n)| (c.to_string(), n)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}
