//! Proposal recall, average recall and detection mAP.
//!
//! Proposals are given per video, already ranked best first. Videos with
//! ground truth but no entry in the proposal map simply contribute misses.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{ClassId, Detection, GroundTruthAnnotation, TemporalInterval};

/// Ranked proposal intervals keyed by video id.
pub type ProposalMap = BTreeMap<String, Vec<TemporalInterval>>;

/// `{0.5, 0.55, ..., 0.95}`.
pub fn default_iou_grid() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

fn total_gt(gt: &[GroundTruthAnnotation]) -> usize {
    gt.iter().map(|g| g.intervals.len()).sum()
}

/// Fraction of ground-truth intervals hit (IoU >= threshold) by any of the
/// top `k` proposals of their video.
pub fn recall_at_k(proposals: &ProposalMap, gt: &[GroundTruthAnnotation], k: usize, iou_threshold: f64) -> Result<f64> {
    let total = total_gt(gt);
    if total == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut hit = 0usize;
    for g in gt {
        let top = proposals.get(&g.video_id).map_or(&[][..], |p| &p[..k.min(p.len())]);
        hit += g
            .intervals
            .iter()
            .filter(|li| top.iter().any(|p| p.iou(&li.interval) >= iou_threshold))
            .count();
    }
    Ok(hit as f64 / total as f64)
}

/// Mean of [`recall_at_k`] over `iou_grid`.
pub fn average_recall(proposals: &ProposalMap, gt: &[GroundTruthAnnotation], k: usize, iou_grid: &[f64]) -> Result<f64> {
    let curve = recall_vs_iou_curve(proposals, gt, k, iou_grid)?;
    if curve.recall.is_empty() {
        return Err(Error::InvalidConfig("empty IoU grid".into()));
    }
    Ok(curve.recall.iter().sum::<f64>() / curve.recall.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub iou_grid: Vec<f64>,
    pub recall: Vec<f64>,
    pub proposals_per_video: usize,
}

/// Best IoU any of the top `k` proposals achieves for each ground-truth interval.
fn best_ious(proposals: &ProposalMap, gt: &[GroundTruthAnnotation], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(total_gt(gt));
    for g in gt {
        let top = proposals.get(&g.video_id).map_or(&[][..], |p| &p[..k.min(p.len())]);
        for li in &g.intervals {
            out.push(top.iter().map(|p| p.iou(&li.interval)).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    out
}

pub fn recall_vs_iou_curve(proposals: &ProposalMap, gt: &[GroundTruthAnnotation], k: usize, grid: &[f64]) -> Result<RecallCurve> {
    let best = best_ious(proposals, gt, k);
    if best.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let n = best.len() as f64;
    let recall = grid.iter().map(|&t| best.iter().filter(|&&b| b >= t).count() as f64 / n).collect();
    Ok(RecallCurve { iou_grid: grid.to_vec(), recall, proposals_per_video: k })
}

/// Recall at a fixed threshold as the proposal budget grows.
pub fn recall_vs_k(proposals: &ProposalMap, gt: &[GroundTruthAnnotation], ks: &[usize], iou_threshold: f64) -> Result<Vec<(usize, f64)>> {
    ks.iter().map(|&k| Ok((k, recall_at_k(proposals, gt, k, iou_threshold)?))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APResult {
    pub per_class_ap: BTreeMap<ClassId, f64>,
    pub map_value: f64,
    pub tiou: f64,
}

/// How precision is summarized into AP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Area under the non-increasing precision envelope, all points.
    #[default]
    Envelope,
    /// Mean of the envelope sampled at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Area under the non-increasing precision envelope.
///
/// `tp` holds the outcome of each detection in score order; `num_gt > 0`.
pub fn average_precision(tp: &[bool], num_gt: usize) -> f64 {
    average_precision_with(tp, num_gt, ApInterpolation::Envelope)
}

pub fn average_precision_with(tp: &[bool], num_gt: usize, interp: ApInterpolation) -> f64 {
    let mut hits = 0usize;
    let mut envelope: Vec<f64> = tp
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            hits += usize::from(t);
            hits as f64 / (i + 1) as f64
        })
        .collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match interp {
        ApInterpolation::Envelope => {
            // recall grows by 1/num_gt exactly at each true positive
            let area: f64 = tp.iter().zip(&envelope).filter(|(&t, _)| t).fold(0.0, |acc, (_, &p)| acc + p);
            area / num_gt as f64
        }
        ApInterpolation::ElevenPoint => {
            let mut hits = 0usize;
            let recall: Vec<f64> = tp
                .iter()
                .map(|&t| {
                    hits += usize::from(t);
                    hits as f64 / num_gt as f64
                })
                .collect();
            let total: f64 = (0..=10)
                .map(|i| {
                    let r = f64::from(i) / 10.0;
                    // envelope is non-increasing, so the first reaching index is the max
                    recall.iter().position(|&x| x >= r - 1e-12).map_or(0.0, |j| envelope[j])
                })
                .fold(0.0, |a, b| a + b);
            total / 11.0
        }
    }
}

/// Greedy score-ordered matching of one class's detections.
///
/// Each detection takes the unmatched ground truth of its video with the
/// highest IoU (ties go to the earlier begin); it is a true positive when that
/// IoU reaches `tiou`. Detections with equal scores keep their input order.
pub fn match_detections(dets: &[&Detection], gts: &[(&str, TemporalInterval)], tiou: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut used = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let d = dets[i];
            let mut best: Option<(usize, f64)> = None;
            for (j, (vid, g)) in gts.iter().enumerate() {
                if used[j] || *vid != d.video_id {
                    continue;
                }
                let iou = d.interval.iou(g);
                let better = match best {
                    None => true,
                    Some((bj, bi)) => iou > bi || (iou == bi && g.begin() < gts[bj].1.begin()),
                };
                if better {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, iou)) if iou >= tiou => {
                    used[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Per-class AP at `tiou`, averaged over the classes that have ground truth.
/// Detections of classes absent from the ground truth are ignored.
pub fn mean_average_precision(detections: &[Detection], gt: &[GroundTruthAnnotation], tiou: f64) -> Result<APResult> {
    mean_average_precision_with(detections, gt, tiou, ApInterpolation::Envelope)
}

pub fn mean_average_precision_with(
    detections: &[Detection],
    gt: &[GroundTruthAnnotation],
    tiou: f64,
    interp: ApInterpolation,
) -> Result<APResult> {
    let mut gt_by_class: BTreeMap<ClassId, Vec<(&str, TemporalInterval)>> = BTreeMap::new();
    for g in gt {
        for li in &g.intervals {
            gt_by_class.entry(li.class_id).or_default().push((g.video_id.as_str(), li.interval));
        }
    }
    if gt_by_class.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let mut per_class_ap = BTreeMap::new();
    for (&class, gts) in &gt_by_class {
        let dets: Vec<&Detection> = detections.iter().filter(|d| d.class_id == class).collect();
        let tp = match_detections(&dets, gts, tiou);
        per_class_ap.insert(class, average_precision_with(&tp, gts.len(), interp));
    }
    let map_value = per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64;
    Ok(APResult { per_class_ap, map_value, tiou })
}

/// Scalar metrics printed by `eval` and saved as the JSON summary. Proposal
/// metrics are empty without proposals, mAP is empty without detections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Average recall over the configured grid, keyed by proposals per video.
    pub average_recall: BTreeMap<usize, f64>,
    /// Recall at tIoU 0.5 with `recall_budget` proposals per video.
    pub recall_at_05: Option<f64>,
    pub recall_budget: usize,
    /// mAP keyed by tIoU as text, e.g. "0.5".
    pub map: BTreeMap<String, f64>,
}

pub const AR_BUDGETS: [usize; 4] = [10, 50, 100, 500];
pub const MAP_THRESHOLDS: [f64; 3] = [0.5, 0.75, 0.95];
pub const RECALL_BUDGET: usize = 100;

/// Evaluation protocol knobs; defaults reproduce [`summarize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// tIoU thresholds averaged by AR and used for recall-vs-IoU curves.
    pub iou_grid: Vec<f64>,
    pub ar_budgets: Vec<usize>,
    pub recall_budget: usize,
    pub map_thresholds: Vec<f64>,
    pub ap_interpolation: ApInterpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_grid: default_iou_grid(),
            ar_budgets: AR_BUDGETS.to_vec(),
            recall_budget: RECALL_BUDGET,
            map_thresholds: MAP_THRESHOLDS.to_vec(),
            ap_interpolation: ApInterpolation::Envelope,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: &[f64]| v.iter().all(|&t| t > 0.0 && t <= 1.0);
        if self.iou_grid.is_empty() || !in_range(&self.iou_grid) {
            return Err(Error::InvalidConfig("iou_grid must be non-empty with values in (0, 1]".into()));
        }
        if !in_range(&self.map_thresholds) {
            return Err(Error::InvalidConfig("map_thresholds must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

pub fn summarize(proposals: Option<&ProposalMap>, detections: Option<&[Detection]>, gt: &[GroundTruthAnnotation]) -> Result<EvalSummary> {
    summarize_with(proposals, detections, gt, &EvalConfig::default())
}

pub fn summarize_with(
    proposals: Option<&ProposalMap>,
    detections: Option<&[Detection]>,
    gt: &[GroundTruthAnnotation],
    cfg: &EvalConfig,
) -> Result<EvalSummary> {
    cfg.validate()?;
    let mut out = EvalSummary { recall_budget: cfg.recall_budget, ..Default::default() };
    if let Some(props) = proposals {
        for &k in &cfg.ar_budgets {
            out.average_recall.insert(k, average_recall(props, gt, k, &cfg.iou_grid)?);
        }
        out.recall_at_05 = Some(recall_at_k(props, gt, cfg.recall_budget, 0.5)?);
    }
    if let Some(dets) = detections {
        for &t in &cfg.map_thresholds {
            out.map.insert(t.to_string(), mean_average_precision_with(dets, gt, t, cfg.ap_interpolation)?.map_value);
        }
    }
    Ok(out)
}

impl EvalSummary {
    /// Fixed-layout table, one metric per line.
    pub fn table(&self) -> String {
        let mut s = String::from("metric            value\n");
        for (k, v) in &self.average_recall {
            s += &format!("{:<17} {:.4}\n", format!("AR@{k}"), v);
        }
        if let Some(r) = self.recall_at_05 {
            s += &format!("{:<17} {:.4}\n", format!("R@{}(0.5)", self.recall_budget), r);
        }
        for (t, v) in &self.map {
            s += &format!("{:<17} {:.4}\n", format!("mAP@{t}"), v);
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::State(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Writes `x y` pairs, one per line, after a `#` header naming the columns.
pub fn write_xy(path: impl AsRef<Path>, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("# {x_label} {y_label}\n");
    for (x, y) in points {
        out += &format!("{x} {y}\n");
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

impl RecallCurve {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.iou_grid.iter().copied().zip(self.recall.iter().copied()).collect()
    }
}
