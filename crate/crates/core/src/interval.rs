//! Interval and annotation types shared by every stage of the pipeline.
//!
//! Intervals are half-open `[begin, end)` in integer frame units. A proposal
//! may start before frame 0 or end past the last frame; those frames are
//! treated as zero-padding by the samplers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(i64, i64)", into = "(i64, i64)")]
pub struct TemporalInterval {
    begin: i64,
    end: i64,
}

impl TemporalInterval {
    pub fn new(begin: i64, end: i64) -> Result<Self> {
        if end <= begin {
            return Err(Error::InvalidInterval { begin, end });
        }
        Ok(Self { begin, end })
    }

    #[inline]
    pub fn begin(&self) -> i64 {
        self.begin
    }

    #[inline]
    pub fn end(&self) -> i64 {
        self.end
    }

    #[inline]
    pub fn length(&self) -> i64 {
        self.end - self.begin
    }

    /// Real-valued midpoint.
    #[inline]
    pub fn center(&self) -> f64 {
        (self.begin + self.end) as f64 / 2.0
    }

    pub fn shifted(&self, offset: i64) -> Self {
        Self { begin: self.begin + offset, end: self.end + offset }
    }

    /// Number of frames shared with `other`.
    #[inline]
    pub fn intersection_len(&self, other: &Self) -> i64 {
        (self.end.min(other.end) - self.begin.max(other.begin)).max(0)
    }

    /// Temporal intersection-over-union.
    pub fn iou(&self, other: &Self) -> f64 {
        iou(self, other)
    }

    /// Intersection with the video extent `[0, num_frames)`.
    pub fn clamp_to_video(&self, num_frames: usize) -> Result<Self> {
        clamp_to_video(self, num_frames)
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.begin <= other.begin && other.end <= self.end
    }
}

impl TryFrom<(i64, i64)> for TemporalInterval {
    type Error = Error;

    fn try_from((begin, end): (i64, i64)) -> Result<Self> {
        Self::new(begin, end)
    }
}

impl From<TemporalInterval> for (i64, i64) {
    fn from(iv: TemporalInterval) -> Self {
        (iv.begin, iv.end)
    }
}

impl std::fmt::Display for TemporalInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.begin, self.end)
    }
}

pub fn iou(a: &TemporalInterval, b: &TemporalInterval) -> f64 {
    let inter = a.intersection_len(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.length() + b.length() - inter;
    inter as f64 / union as f64
}

pub fn clamp_to_video(a: &TemporalInterval, num_frames: usize) -> Result<TemporalInterval> {
    let begin = a.begin.max(0);
    let end = a.end.min(num_frames as i64);
    if end <= begin {
        return Err(Error::EmptyAfterClamp { begin: a.begin, end: a.end, num_frames });
    }
    Ok(TemporalInterval { begin, end })
}

/// Class ids start at 1; 0 is the background class.
pub type ClassId = u32;

pub const BACKGROUND: ClassId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub interval: TemporalInterval,
    pub class_id: ClassId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub video_id: String,
    pub num_frames: usize,
    pub intervals: Vec<LabeledInterval>,
}

impl GroundTruthAnnotation {
    pub fn new(
        video_id: impl Into<String>,
        num_frames: usize,
        intervals: Vec<LabeledInterval>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        let mut problems = Vec::new();
        for li in &intervals {
            if li.class_id == BACKGROUND {
                problems.push(format!("{video_id}: class 0 is reserved for background ({})", li.interval));
            }
            if li.interval.begin() < 0 || li.interval.end() > num_frames as i64 {
                problems.push(format!(
                    "{video_id}: interval {} outside [0, {num_frames})",
                    li.interval
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self { video_id, num_frames, intervals })
    }

    /// Largest IoU between `interval` and any annotated interval (0 when there are none).
    pub fn max_iou(&self, interval: &TemporalInterval) -> f64 {
        self.intervals
            .iter()
            .map(|li| iou(interval, &li.interval))
            .fold(0.0, f64::max)
    }
}

/// A final, classified localization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub interval: TemporalInterval,
    pub class_id: ClassId,
    pub score: f64,
}
