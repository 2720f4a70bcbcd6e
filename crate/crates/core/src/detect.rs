//! Full detection pipeline: anchors, ranking, NMS, top-K, classification.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::{generate_anchors, AnchorConfig, Proposal};
use crate::classifier::{argmax, Classifier};
use crate::error::{Error, Result};
use crate::interval::{ClassId, Detection, TemporalInterval, BACKGROUND};
use crate::ranker::{rank_proposals, ranking_order, Ranker};
use crate::sampling::FeatureSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCombination {
    /// Classifier probability of the predicted class.
    ClassifierOnly,
    /// Classifier probability times the ranker score.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub top_k: usize,
    pub nms_threshold: f64,
    pub score_combination: ScoreCombination,
    /// Classify every ranked anchor first and suppress on detection scores.
    pub nms_after_classification: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            top_k: 20,
            nms_threshold: 0.45,
            score_combination: ScoreCombination::ClassifierOnly,
            nms_after_classification: false,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(self.nms_threshold > 0.0 && self.nms_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("nms_threshold must lie in (0, 1), got {}", self.nms_threshold)));
        }
        Ok(())
    }
}

/// Greedy suppression over proposals already in ranking order: each one is
/// kept unless its IoU with an already kept proposal exceeds `threshold`.
pub fn nms(proposals: &[Proposal], threshold: f64) -> Vec<Proposal> {
    let mut kept: Vec<Proposal> = Vec::new();
    for p in proposals {
        if kept.iter().all(|k| k.interval.iou(&p.interval) <= threshold) {
            kept.push(*p);
        }
    }
    kept
}

/// Ranked, suppressed and truncated proposals for one video.
pub fn propose(fs: &FeatureSequence, anchors: &AnchorConfig, ranker: &Ranker, top_k: usize, nms_threshold: f64) -> Result<Vec<Proposal>> {
    let all = generate_anchors(anchors, fs.num_frames())?;
    let ranked = rank_proposals(fs, &all, ranker)?;
    let mut kept = nms(&ranked, nms_threshold);
    kept.truncate(top_k);
    Ok(kept)
}

/// Frozen models used by [`detect`].
#[derive(Debug, Clone)]
pub struct DetectionModels {
    pub anchors: AnchorConfig,
    pub ranker: Ranker,
    pub classifier: Classifier,
}

/// Detections for one video, best first. Survivors whose most likely class is
/// background produce nothing.
pub fn detect(fs: &FeatureSequence, models: &DetectionModels, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let all = generate_anchors(&models.anchors, fs.num_frames())?;
    let ranked = rank_proposals(fs, &all, &models.ranker)?;
    let candidates = if cfg.nms_after_classification {
        ranked
    } else {
        let mut kept = nms(&ranked, cfg.nms_threshold);
        kept.truncate(cfg.top_k);
        kept
    };

    let mut scored: Vec<(Proposal, Detection)> = Vec::new();
    for p in candidates {
        let probs = match models.classifier.classify(fs, &p) {
            Ok(probs) => probs,
            Err(Error::EmptySegment { .. }) => continue,
            Err(e) => return Err(e),
        };
        let class = argmax(probs.iter().copied());
        if class == BACKGROUND as usize {
            continue;
        }
        let score = match cfg.score_combination {
            ScoreCombination::ClassifierOnly => probs[class],
            ScoreCombination::Product => probs[class] * p.score_or_zero(),
        };
        let det = Detection { video_id: fs.video_id().to_string(), interval: p.interval, class_id: class as ClassId, score };
        scored.push((p, det));
    }

    if cfg.nms_after_classification {
        // re-rank on detection score, keep the anchor tie-break
        let mut by_score: Vec<(Proposal, Detection)> = scored
            .into_iter()
            .map(|(p, d)| (Proposal { score: Some(d.score), ..p }, d))
            .collect();
        by_score.sort_by(|a, b| ranking_order(&a.0, &b.0));
        let mut kept: Vec<(Proposal, Detection)> = Vec::new();
        for (p, d) in by_score {
            if kept.len() == cfg.top_k {
                break;
            }
            if kept.iter().all(|(k, _)| k.interval.iou(&p.interval) <= cfg.nms_threshold) {
                kept.push((p, d));
            }
        }
        scored = kept;
    }

    let mut dets: Vec<Detection> = scored.into_iter().map(|(_, d)| d).collect();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(dets)
}

/// One line of a detection file. Field order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub begin: i64,
    pub end: i64,
    pub class_id: ClassId,
    pub class_name: String,
    pub score: f64,
}

impl DetectionRecord {
    pub fn new(d: &Detection, class_name: &str) -> Self {
        Self {
            video_id: d.video_id.clone(),
            begin: d.interval.begin(),
            end: d.interval.end(),
            class_id: d.class_id,
            class_name: class_name.to_string(),
            score: d.score,
        }
    }

    pub fn to_detection(&self) -> Result<Detection> {
        Ok(Detection {
            video_id: self.video_id.clone(),
            interval: TemporalInterval::new(self.begin, self.end)?,
            class_id: self.class_id,
            score: self.score,
        })
    }
}

/// Writes detections as JSON lines. `class_name` maps class ids to names.
pub fn write_detections<W: Write>(mut out: W, detections: &[Detection], class_name: impl Fn(ClassId) -> String) -> Result<()> {
    for d in detections {
        let line = serde_json::to_string(&DetectionRecord::new(d, &class_name(d.class_id)))
            .map_err(|e| Error::State(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<detections>", e))?;
    }
    Ok(())
}

pub fn save_detections(path: impl AsRef<Path>, detections: &[Detection], class_name: impl Fn(ClassId) -> String) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_detections(&mut buf, detections, class_name)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    read_jsonl::<DetectionRecord>(path.as_ref())?.iter().map(DetectionRecord::to_detection).collect()
}

/// One ranked proposal per line of a proposal file, best first within a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub video_id: String,
    pub begin: i64,
    pub end: i64,
    pub score: f64,
}

pub fn save_proposals<'a>(path: impl AsRef<Path>, proposals: impl IntoIterator<Item = (&'a str, &'a [Proposal])>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for (vid, ps) in proposals {
        for p in ps {
            let rec = ProposalRecord {
                video_id: vid.to_string(),
                begin: p.interval.begin(),
                end: p.interval.end(),
                score: p.score_or_zero(),
            };
            let line = serde_json::to_string(&rec).map_err(|e| Error::State(e.to_string()))?;
            writeln!(buf, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a proposal file, keeping the file order within each video.
pub fn load_proposals(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<(TemporalInterval, f64)>>> {
    let mut out: BTreeMap<String, Vec<(TemporalInterval, f64)>> = BTreeMap::new();
    for rec in read_jsonl::<ProposalRecord>(path.as_ref())? {
        out.entry(rec.video_id).or_default().push((TemporalInterval::new(rec.begin, rec.end)?, rec.score));
    }
    Ok(out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}
