//! Corpus-level helpers: dataset assembly and per-video fan-out.
//!
//! Per-video work runs on the current rayon pool; results come back in
//! video-id order regardless of the number of workers.

use std::path::Path;

use rayon::prelude::*;

use crate::anchors::{generate_anchors, AnchorConfig};
use crate::classifier::{ClassifierConfig, ClassifierDataset};
use crate::data_io::features::{feature_path, read_features};
use crate::data_io::manifest::{load_manifest, DatasetManifest};
use crate::data_io::synth::SyntheticDataset;
use crate::detect::{detect, propose, DetectionModels};
use crate::error::{Error, Result};
use crate::interval::{Detection, GroundTruthAnnotation};
use crate::metrics::ProposalMap;
use crate::ranker::{Ranker, RankerConfig, RankerDataset};
use crate::sampling::FeatureSequence;

/// Manifest, features and ground truth, aligned and ordered by video id.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub features: Vec<FeatureSequence>,
    pub ground_truth: Vec<GroundTruthAnnotation>,
}

impl Corpus {
    pub fn new(manifest: DatasetManifest, mut features: Vec<FeatureSequence>) -> Result<Self> {
        features.sort_by(|a, b| a.video_id().cmp(b.video_id()));
        let ids: Vec<&str> = manifest.videos.keys().map(String::as_str).collect();
        let fids: Vec<&str> = features.iter().map(|f| f.video_id()).collect();
        if ids != fids {
            return Err(Error::Validation(vec![format!(
                "manifest lists {} videos but {} feature sequences were given (or their ids differ)",
                ids.len(),
                fids.len()
            )]));
        }
        let mut problems = Vec::new();
        for (fs, (vid, entry)) in features.iter().zip(&manifest.videos) {
            if fs.num_frames() != entry.num_frames {
                problems.push(format!("{vid}: manifest says {} frames, features have {}", entry.num_frames, fs.num_frames()));
            }
        }
        if let Some(d) = features.first().map(FeatureSequence::dim) {
            if let Some(bad) = features.iter().find(|f| f.dim() != d) {
                problems.push(format!("{}: feature dim {} differs from {d}", bad.video_id(), bad.dim()));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let ground_truth = manifest.ground_truth()?;
        Ok(Self { manifest, features, ground_truth })
    }

    /// Reads `<feature_dir>/<video_id>.tcnf` for every manifest entry.
    pub fn load(manifest_path: impl AsRef<Path>, feature_dir: impl AsRef<Path>) -> Result<Self> {
        let manifest = load_manifest(manifest_path)?;
        let features = manifest
            .videos
            .keys()
            .map(|vid| read_features(feature_path(feature_dir.as_ref(), vid)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifest, features)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, FeatureSequence::dim)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn class_name(&self, class_id: u32) -> String {
        self.manifest.class_name(class_id).unwrap_or("background").to_string()
    }
}

impl TryFrom<SyntheticDataset> for Corpus {
    type Error = Error;

    fn try_from(ds: SyntheticDataset) -> Result<Self> {
        Self::new(ds.manifest, ds.features)
    }
}

/// Runs `f` on a pool of `jobs` workers (0 = rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Labeled context pairs for every anchor of every video.
pub fn ranker_dataset(corpus: &Corpus, anchors: &AnchorConfig, cfg: &RankerConfig) -> Result<RankerDataset> {
    let parts = corpus
        .features
        .par_iter()
        .zip(&corpus.ground_truth)
        .map(|(fs, gt)| {
            let mut ds = RankerDataset::default();
            ds.push_video(fs, gt, &generate_anchors(anchors, fs.num_frames())?, cfg)?;
            Ok(ds)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = RankerDataset::default();
    for p in parts {
        out.pairs.extend(p.pairs);
        out.labels.extend(p.labels);
    }
    Ok(out)
}

/// Bilinear descriptors for every anchor that is background or a confident match.
pub fn classifier_dataset(corpus: &Corpus, anchors: &AnchorConfig, cfg: &ClassifierConfig) -> Result<ClassifierDataset> {
    let parts = corpus
        .features
        .par_iter()
        .zip(&corpus.ground_truth)
        .map(|(fs, gt)| {
            let mut ds = ClassifierDataset::default();
            ds.push_video(fs, gt, &generate_anchors(anchors, fs.num_frames())?, cfg)?;
            Ok(ds)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ClassifierDataset::default();
    for p in parts {
        out.descriptors.extend(p.descriptors);
        out.labels.extend(p.labels);
    }
    Ok(out)
}

/// Top proposals per video after NMS.
pub fn propose_corpus(corpus: &Corpus, anchors: &AnchorConfig, ranker: &Ranker, top_k: usize, nms_threshold: f64) -> Result<ProposalMap> {
    let lists = corpus
        .features
        .par_iter()
        .map(|fs| propose(fs, anchors, ranker, top_k, nms_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(corpus
        .features
        .iter()
        .zip(lists)
        .map(|(fs, ps)| (fs.video_id().to_string(), ps.into_iter().map(|p| p.interval).collect()))
        .collect())
}

/// Detections for every video, grouped by video id in order.
pub fn detect_corpus(corpus: &Corpus, models: &DetectionModels, cfg: &crate::detect::DetectConfig) -> Result<Vec<Detection>> {
    let lists = corpus
        .features
        .par_iter()
        .map(|fs| detect(fs, models, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(lists.into_iter().flatten().collect())
}
