//! Dataset manifest: class names plus per-video length, frame rate and
//! annotations.
//!
//! ```json
//! {
//!   "version": 1,
//!   "label_names": ["jump", "run"],
//!   "videos": {
//!     "video_a": {
//!       "num_frames": 900,
//!       "fps": 30.0,
//!       "annotations": [
//!         { "segment": [10.0, 20.0], "label": "jump" },
//!         { "frames": [12, 96], "label": "run" }
//!       ]
//!     }
//!   }
//! }
//! ```
//!
//! `segment` is in seconds and converted with `round(sec * fps)`; `frames`
//! is already a half-open frame interval. Class ids are 1-based positions in
//! `label_names`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{ClassId, GroundTruthAnnotation, LabeledInterval, TemporalInterval};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Span {
    #[serde(rename = "segment")]
    Seconds([f64; 2]),
    #[serde(rename = "frames")]
    Frames([i64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(flatten)]
    pub span: Span,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub num_frames: usize,
    pub fps: f64,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub label_names: Vec<String>,
    pub videos: BTreeMap<String, VideoEntry>,
}

impl Span {
    pub fn to_frames(&self, fps: f64) -> Result<TemporalInterval> {
        match *self {
            Span::Seconds([b, e]) => {
                if !(b.is_finite() && e.is_finite()) {
                    return Err(Error::InvalidInterval { begin: 0, end: 0 });
                }
                TemporalInterval::new((b * fps).round() as i64, (e * fps).round() as i64)
            }
            Span::Frames([b, e]) => TemporalInterval::new(b, e),
        }
    }
}

impl DatasetManifest {
    pub fn new(label_names: Vec<String>) -> Self {
        Self { version: MANIFEST_VERSION, label_names, videos: BTreeMap::new() }
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn class_id(&self, label: &str) -> Option<ClassId> {
        self.label_names.iter().position(|l| l == label).map(|i| i as ClassId + 1)
    }

    pub fn class_name(&self, class_id: ClassId) -> Option<&str> {
        let idx = (class_id as usize).checked_sub(1)?;
        self.label_names.get(idx).map(String::as_str)
    }

    /// Every violation at once, empty when the manifest is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != MANIFEST_VERSION {
            out.push(format!("unsupported manifest version {}", self.version));
        }
        if self.label_names.is_empty() {
            out.push("label_names is empty".to_string());
        }
        let mut seen = HashSet::new();
        for l in &self.label_names {
            if !seen.insert(l) {
                out.push(format!("duplicate label {l:?}"));
            }
        }
        for (vid, v) in &self.videos {
            if v.num_frames == 0 {
                out.push(format!("{vid}: num_frames must be >= 1"));
            }
            if !(v.fps > 0.0 && v.fps.is_finite()) {
                out.push(format!("{vid}: fps must be positive, got {}", v.fps));
                continue;
            }
            for (i, a) in v.annotations.iter().enumerate() {
                if self.class_id(&a.label).is_none() {
                    out.push(format!("{vid}: annotation {i} has unknown label {:?}", a.label));
                }
                match a.span.to_frames(v.fps) {
                    Err(_) => out.push(format!("{vid}: annotation {i} is degenerate ({:?})", a.span)),
                    Ok(iv) if iv.begin() < 0 || iv.end() > v.num_frames as i64 => out.push(format!(
                        "{vid}: annotation {i} {iv} lies outside [0, {})",
                        v.num_frames
                    )),
                    Ok(_) => {}
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn ground_truth_for(&self, video_id: &str) -> Result<GroundTruthAnnotation> {
        let v = self
            .videos
            .get(video_id)
            .ok_or_else(|| Error::Validation(vec![format!("unknown video {video_id:?}")]))?;
        let mut intervals = Vec::with_capacity(v.annotations.len());
        for a in &v.annotations {
            let class_id = self
                .class_id(&a.label)
                .ok_or_else(|| Error::Validation(vec![format!("{video_id}: unknown label {:?}", a.label)]))?;
            intervals.push(LabeledInterval { interval: a.span.to_frames(v.fps)?, class_id });
        }
        GroundTruthAnnotation::new(video_id, v.num_frames, intervals)
    }

    /// Ground truth of every video, ordered by video id.
    pub fn ground_truth(&self) -> Result<Vec<GroundTruthAnnotation>> {
        self.videos.keys().map(|vid| self.ground_truth_for(vid)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::State(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let manifest: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Parse {
                path: origin.to_string(),
                message: format!("line {} column {}, field `{path}`: {inner}", inner.line(), inner.column()),
            }
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text, &path.display().to_string())
}
