//! Multi-scale anchor pyramid.
//!
//! Windows of `base_length` frames slide with 50% overlap (stride
//! `base_length / 2`). Every window start lies strictly inside the video, so
//! there are `M = floor((T - 1) / stride) + 1` positions. At each position the
//! pyramid places `num_scales` intervals of length `base_length * 2^(k-1)`,
//! all sharing the window center. Anchors are not clamped; frames outside the
//! video are zero-padded when features are sampled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{GroundTruthAnnotation, TemporalInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub base_length: u32,
    pub num_scales: u32,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self { base_length: 16, num_scales: 4 }
    }
}

impl AnchorConfig {
    pub fn new(base_length: u32, num_scales: u32) -> Result<Self> {
        let cfg = Self { base_length, num_scales };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_length < 2 || self.base_length % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "anchor base length must be even and >= 2, got {}",
                self.base_length
            )));
        }
        if self.num_scales < 1 {
            return Err(Error::InvalidConfig("anchor pyramid needs at least one scale".into()));
        }
        if self.num_scales > 24 {
            return Err(Error::InvalidConfig(format!(
                "{} scales overflow the frame range",
                self.num_scales
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn stride(&self) -> i64 {
        i64::from(self.base_length / 2)
    }

    /// Length of the anchor at 1-based `scale`.
    #[inline]
    pub fn scale_length(&self, scale: u32) -> i64 {
        i64::from(self.base_length) << (scale - 1)
    }

    /// Number of window positions for a video of `num_frames` frames.
    pub fn num_positions(&self, num_frames: usize) -> usize {
        if num_frames == 0 {
            return 0;
        }
        (num_frames - 1) / (self.base_length as usize / 2) + 1
    }
}

/// A candidate interval at pyramid position `position` and 1-based `scale`.
///
/// `score` stays `None` until the proposal has been ranked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub interval: TemporalInterval,
    pub position: u32,
    pub scale: u32,
    pub score: Option<f64>,
}

impl Proposal {
    pub fn score_or_zero(&self) -> f64 {
        self.score.unwrap_or(0.0)
    }
}

/// Emits `M * K` proposals ordered by position, then scale.
pub fn generate_anchors(cfg: &AnchorConfig, num_frames: usize) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let m = cfg.num_positions(num_frames);
    let stride = cfg.stride();
    let mut out = Vec::with_capacity(m * cfg.num_scales as usize);
    for i in 0..m {
        let center = i as i64 * stride + stride;
        for k in 1..=cfg.num_scales {
            let len = cfg.scale_length(k);
            let begin = center - len / 2;
            out.push(Proposal {
                interval: TemporalInterval::new(begin, begin + len)?,
                position: i as u32,
                scale: k,
                score: None,
            });
        }
    }
    Ok(out)
}

/// Best recall any ranking of `anchors` could reach: the fraction of
/// ground-truth intervals with at least one anchor at IoU >= `iou_threshold`.
pub fn pyramid_coverage_recall(
    anchors: &[Proposal],
    gt: &GroundTruthAnnotation,
    iou_threshold: f64,
) -> f64 {
    if gt.intervals.is_empty() {
        return 0.0;
    }
    let covered = gt
        .intervals
        .iter()
        .filter(|g| anchors.iter().any(|a| a.interval.iou(&g.interval) >= iou_threshold))
        .count();
    covered as f64 / gt.intervals.len() as f64
}
