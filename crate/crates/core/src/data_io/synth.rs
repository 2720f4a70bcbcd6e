//! Seeded synthetic benchmark.
//!
//! Background frames are zero-mean Gaussian noise. An activity of class `c`
//! adds `snr` along channel `c - 1` over its interval. With `boundary_signal`
//! set, channel `num_classes` additionally carries a transient of height
//! `snr` on the two frames straddling each activity boundary (`b - 1, b` and
//! `e - 1, e`). Remaining channels are pure noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::quantize;
use super::manifest::{Annotation, DatasetManifest, Span, VideoEntry};
use crate::error::{Error, Result};
use crate::interval::{ClassId, TemporalInterval};
use crate::ranker::{RankLabel, RankerDataset};
use crate::sampling::{ContextPair, FeatureSequence, SampledFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub min_activities: usize,
    pub max_activities: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub snr: f64,
    pub noise_std: f64,
    pub boundary_signal: bool,
    pub fps: f64,
    pub seed: u64,
    /// Video ids are `<prefix>_<index>`.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_videos: 200,
            min_frames: 192,
            max_frames: 320,
            feature_dim: 8,
            num_classes: 4,
            min_activities: 1,
            max_activities: 2,
            min_duration: 24,
            max_duration: 128,
            snr: 2.0,
            noise_std: 1.0,
            boundary_signal: true,
            fps: 30.0,
            seed: 0,
            id_prefix: "synth".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.num_classes == 0 {
            p.push("num_classes must be >= 1".to_string());
        }
        if self.feature_dim < self.num_classes + 2 {
            p.push(format!(
                "feature_dim {} must be >= num_classes + 2 = {}",
                self.feature_dim,
                self.num_classes + 2
            ));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            p.push(format!("invalid frame range {}..={}", self.min_frames, self.max_frames));
        }
        if self.min_activities > self.max_activities {
            p.push(format!("invalid activity range {}..={}", self.min_activities, self.max_activities));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            p.push(format!("invalid duration range {}..={}", self.min_duration, self.max_duration));
        }
        if self.max_duration > self.min_frames {
            p.push(format!(
                "max_duration {} exceeds the shortest video ({} frames)",
                self.max_duration, self.min_frames
            ));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            p.push(format!("snr must be >= 0, got {}", self.snr));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            p.push(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            p.push(format!("fps must be positive, got {}", self.fps));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p.join("; ")))
        }
    }

    pub fn label_names(&self) -> Vec<String> {
        (1..=self.num_classes).map(|c| format!("class_{c}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    /// Ordered like `manifest.videos`.
    pub features: Vec<FeatureSequence>,
}

fn place_activities<R: Rng>(cfg: &SynthConfig, num_frames: usize, rng: &mut R) -> Vec<(TemporalInterval, ClassId)> {
    let want = rng.random_range(cfg.min_activities..=cfg.max_activities);
    let mut placed: Vec<(TemporalInterval, ClassId)> = Vec::with_capacity(want);
    let mut tries = 0;
    while placed.len() < want && tries < 100 * want.max(1) {
        tries += 1;
        let dur = rng.random_range(cfg.min_duration..=cfg.max_duration);
        let begin = rng.random_range(0..=num_frames - dur) as i64;
        let iv = TemporalInterval::new(begin, begin + dur as i64).expect("dur >= 1");
        let class = rng.random_range(1..=cfg.num_classes) as ClassId;
        // keep a one-frame gap so boundary transients never merge
        let clash = placed.iter().any(|(o, _)| iv.begin() <= o.end() && o.begin() <= iv.end());
        if !clash {
            placed.push((iv, class));
        }
    }
    placed.sort_by_key(|(iv, _)| iv.begin());
    placed
}

fn render<R: Rng>(cfg: &SynthConfig, num_frames: usize, acts: &[(TemporalInterval, ClassId)], rng: &mut R) -> Array2<f64> {
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
    let mut v = Array2::from_shape_simple_fn((num_frames, cfg.feature_dim), || noise.sample(rng));
    let boundary_channel = cfg.num_classes;
    for (iv, class) in acts {
        let ch = *class as usize - 1;
        for t in iv.begin()..iv.end() {
            v[[t as usize, ch]] += cfg.snr;
        }
        if cfg.boundary_signal {
            for t in [iv.begin() - 1, iv.begin(), iv.end() - 1, iv.end()] {
                if (0..num_frames as i64).contains(&t) {
                    v[[t as usize, boundary_channel]] += cfg.snr;
                }
            }
        }
    }
    quantize(&mut v);
    v
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut manifest = DatasetManifest::new(cfg.label_names());
    let mut features = Vec::with_capacity(cfg.num_videos);
    for i in 0..cfg.num_videos {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let video_id = format!("{}_{i:04}", cfg.id_prefix);
        let num_frames = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let acts = place_activities(cfg, num_frames, &mut rng);
        let values = render(cfg, num_frames, &acts, &mut rng);
        let annotations = acts
            .iter()
            .map(|(iv, c)| Annotation {
                span: Span::Frames([iv.begin(), iv.end()]),
                label: cfg.label_names()[*c as usize - 1].clone(),
            })
            .collect();
        manifest.videos.insert(video_id.clone(), VideoEntry { num_frames, fps: cfg.fps, annotations });
        features.push(FeatureSequence::new(video_id, values)?);
    }
    manifest.validate()?;
    Ok(SyntheticDataset { manifest, features })
}

/// Linearly separable ranker pairs: positives carry a constant +1 on channel
/// 0 of the inner sample, everything else is unit Gaussian noise.
pub fn separable_ranker_set(count: usize, samples: usize, feature_dim: usize, seed: u64) -> RankerDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ds = RankerDataset::default();
    for i in 0..count {
        let positive = i % 2 == 0;
        let mut inner = Array2::from_shape_simple_fn((samples, feature_dim), || noise.sample(&mut rng));
        let outer = Array2::from_shape_simple_fn((samples, feature_dim), || noise.sample(&mut rng));
        if positive {
            inner.column_mut(0).mapv_inplace(|v| v + 1.0);
        }
        ds.pairs.push(ContextPair { inner: SampledFeatures { values: inner }, outer: SampledFeatures { values: outer } });
        ds.labels.push(if positive { RankLabel::Positive } else { RankLabel::Negative });
    }
    ds
}

/// Segments of pure class signal (`snr` on channel `c - 1`) plus background
/// segments of pure noise, labeled 0.
pub fn class_coded_segments(
    per_class: usize,
    num_classes: usize,
    feature_dim: usize,
    snr: f64,
    seed: u64,
) -> Result<Vec<(Array2<f64>, ClassId)>> {
    if feature_dim < num_classes {
        return Err(Error::InvalidConfig("feature_dim must cover every class channel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(per_class * (num_classes + 1));
    for i in 0..per_class * (num_classes + 1) {
        let class = (i % (num_classes + 1)) as ClassId;
        let len = rng.random_range(8..=48);
        let mut z = Array2::from_shape_simple_fn((len, feature_dim), || noise.sample(&mut rng));
        if class > 0 {
            z.column_mut(class as usize - 1).mapv_inplace(|v| v + snr);
        }
        out.push((z, class));
    }
    Ok(out)
}
