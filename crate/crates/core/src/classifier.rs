//! Segment classifier over bilinear-pooled features.
//!
//! All frames inside the (clamped) segment are pooled into the `D x D`
//! second-moment matrix `sum_i z_i^T z_i`, vectorized row-major, passed
//! through signed square root and l2 normalization, and mapped by one fully
//! connected layer to `num_classes + 1` logits (index 0 is background).

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::Proposal;
use crate::error::{Error, Result};
use crate::interval::{ClassId, GroundTruthAnnotation, TemporalInterval, BACKGROUND};
use crate::nn::optim::step_model;
use crate::nn::{softmax, softmax_xent_batch, Checkpoint, Linear, OptimizerConfig, Param, Parameterized};
use crate::ranker::{draw, load_tensors, TrainReport};
use crate::sampling::FeatureSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub feature_dim: usize,
    pub num_classes: usize,
    pub iou_pos: f64,
    pub iou_neg: f64,
    pub batch_size: usize,
    pub bg_per_batch: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            feature_dim: 1,
            num_classes: 1,
            iou_pos: 0.7,
            iou_neg: 0.3,
            batch_size: 1024,
            bg_per_batch: 64,
            optimizer: OptimizerConfig::classifier_default(),
        }
    }
}

impl ClassifierConfig {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self { feature_dim, num_classes, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.feature_dim == 0 || self.num_classes == 0 {
            p.push("feature_dim and num_classes must be positive".to_string());
        }
        if self.bg_per_batch > self.batch_size || self.batch_size == 0 {
            p.push(format!("bg_per_batch {} must not exceed batch_size {}", self.bg_per_batch, self.batch_size));
        }
        if !(0.0 <= self.iou_neg && self.iou_neg < self.iou_pos && self.iou_pos <= 1.0) {
            p.push(format!("need 0 <= iou_neg < iou_pos <= 1, got {} / {}", self.iou_neg, self.iou_pos));
        }
        if let Err(e) = self.optimizer.validate() {
            p.push(e.to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p.join("; ")))
        }
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim * self.feature_dim
    }
}

/// Row-major `D x D` bilinear matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearVector {
    pub dim: usize,
    pub values: Array1<f64>,
}

impl BilinearVector {
    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        self.values.view().into_shape_with_order((self.dim, self.dim)).expect("square")
    }
}

/// `sum_i z_i^T z_i` over the rows of `z` (`l x D`).
pub fn bilinear_pool(z: ArrayView2<'_, f64>) -> Result<BilinearVector> {
    if z.nrows() == 0 {
        return Err(Error::EmptySegment { begin: 0, end: 0 });
    }
    let d = z.ncols();
    let m = z.t().dot(&z);
    let values = m.as_standard_layout().into_owned().into_shape_with_order(d * d).expect("d*d");
    Ok(BilinearVector { dim: d, values })
}

/// `sign(x) sqrt|x|`, then unit l2 norm. The zero vector maps to itself.
pub fn signed_sqrt_l2(x: &Array1<f64>) -> Array1<f64> {
    let y = x.mapv(|v| v.signum() * v.abs().sqrt());
    let norm = y.dot(&y).sqrt();
    if norm == 0.0 {
        y
    } else {
        y / norm
    }
}

/// Normalized bilinear descriptor of every frame of `interval` inside the video.
pub fn segment_descriptor(fs: &FeatureSequence, interval: &TemporalInterval) -> Result<Array1<f64>> {
    let clamped = interval
        .clamp_to_video(fs.num_frames())
        .map_err(|_| Error::EmptySegment { begin: interval.begin(), end: interval.end() })?;
    let rows = fs
        .values()
        .slice_move(ndarray::s![clamped.begin() as usize..clamped.end() as usize, ..]);
    normalized_descriptor(rows)
}

/// `signed_sqrt_l2(bilinear_pool(z))`.
pub fn normalized_descriptor(z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    Ok(signed_sqrt_l2(&bilinear_pool(z)?.values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    /// 0 is background.
    Class(ClassId),
    Ignore,
}

/// Above `iou_pos`: the class with the largest total overlap (ties to the
/// smaller id). Below `iou_neg`: background. Otherwise ignored.
pub fn assign_class_label_with(proposal: &Proposal, gt: &GroundTruthAnnotation, iou_pos: f64, iou_neg: f64) -> ClassLabel {
    let best = gt.max_iou(&proposal.interval);
    if best < iou_neg {
        return ClassLabel::Class(BACKGROUND);
    }
    if best <= iou_pos {
        return ClassLabel::Ignore;
    }
    let mut totals: std::collections::BTreeMap<ClassId, i64> = Default::default();
    for li in &gt.intervals {
        *totals.entry(li.class_id).or_default() += proposal.interval.intersection_len(&li.interval);
    }
    let (class, _) = totals
        .into_iter()
        .fold((BACKGROUND, -1), |acc, (c, t)| if t > acc.1 { (c, t) } else { acc });
    ClassLabel::Class(class)
}

pub fn assign_class_label(proposal: &Proposal, gt: &GroundTruthAnnotation) -> ClassLabel {
    assign_class_label_with(proposal, gt, 0.7, 0.3)
}

/// Precomputed descriptors with integer targets (0 = background).
#[derive(Debug, Clone, Default)]
pub struct ClassifierDataset {
    pub descriptors: Vec<Array1<f64>>,
    pub labels: Vec<ClassId>,
}

impl ClassifierDataset {
    pub fn push(&mut self, descriptor: Array1<f64>, label: ClassId) {
        self.descriptors.push(descriptor);
        self.labels.push(label);
    }

    /// Adds every non-ignored proposal of a video.
    pub fn push_video(
        &mut self,
        fs: &FeatureSequence,
        gt: &GroundTruthAnnotation,
        proposals: &[Proposal],
        cfg: &ClassifierConfig,
    ) -> Result<()> {
        if fs.dim() != cfg.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "{}: features have dim {}, classifier expects {}",
                fs.video_id(),
                fs.dim(),
                cfg.feature_dim
            )));
        }
        for p in proposals {
            let ClassLabel::Class(label) = assign_class_label_with(p, gt, cfg.iou_pos, cfg.iou_neg) else {
                continue;
            };
            match segment_descriptor(fs, &p.interval) {
                Ok(d) => self.push(d, label),
                Err(Error::EmptySegment { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Dataset from raw labeled segments (`l x D` each).
    pub fn from_segments(segments: &[(Array2<f64>, ClassId)]) -> Result<Self> {
        let mut ds = Self::default();
        for (z, label) in segments {
            ds.push(normalized_descriptor(z.view())?, *label);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn gather(&self, indices: &[usize]) -> Array2<f64> {
        let width = self.descriptors.first().map_or(0, |d| d.len());
        let mut x = Array2::zeros((indices.len(), width));
        for (row, &i) in x.rows_mut().into_iter().zip(indices) {
            let mut row = row;
            row.assign(&self.descriptors[i]);
        }
        x
    }
}

/// Batch of `bg_per_batch` background and `batch_size - bg_per_batch`
/// foreground samples, drawn with replacement only when a side is scarce.
pub fn make_classifier_batch<R: Rng + ?Sized>(labels: &[ClassId], cfg: &ClassifierConfig, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    let bg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == BACKGROUND).collect();
    let fg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != BACKGROUND).collect();
    let n_bg = cfg.bg_per_batch;
    let n_fg = cfg.batch_size - n_bg;
    if n_bg > 0 && bg.is_empty() {
        return Err(Error::NoBackground);
    }
    if n_fg > 0 && fg.is_empty() {
        return Err(Error::NoForeground);
    }
    let mut idx = if n_bg > 0 { draw(&bg, n_bg, rng) } else { Vec::new() };
    if n_fg > 0 {
        idx.extend(draw(&fg, n_fg, rng));
    }
    let targets = idx.iter().map(|&i| labels[i] as usize).collect();
    Ok((idx, targets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    cfg: ClassifierConfig,
    fc: Linear,
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    kind: String,
    config: ClassifierConfig,
}

const CLASSIFIER_KIND: &str = "tcn-classifier";

impl Classifier {
    pub fn new<R: Rng + ?Sized>(cfg: ClassifierConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let fc = Linear::new(cfg.input_dim(), cfg.num_classes + 1, rng);
        Ok(Self { cfg, fc })
    }

    pub fn with_seed(cfg: ClassifierConfig, seed: u64) -> Result<Self> {
        Self::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// All-zero output layer (uniform predictions).
    pub fn zeroed(cfg: ClassifierConfig) -> Result<Self> {
        cfg.validate()?;
        let fc = Linear::zeros(cfg.input_dim(), cfg.num_classes + 1);
        Ok(Self { cfg, fc })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.cfg
    }

    pub fn fc_mut(&mut self) -> &mut Linear {
        &mut self.fc
    }

    /// Class probabilities for a normalized descriptor.
    pub fn predict_descriptor(&self, descriptor: &Array1<f64>) -> Result<Array1<f64>> {
        Ok(softmax(self.fc.forward_vec(descriptor.view())?.view()))
    }

    /// Probabilities over `num_classes + 1` classes for one proposal.
    pub fn classify(&self, fs: &FeatureSequence, proposal: &Proposal) -> Result<Array1<f64>> {
        if fs.dim() != self.cfg.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "{}: features have dim {}, classifier expects {}",
                fs.video_id(),
                fs.dim(),
                self.cfg.feature_dim
            )));
        }
        self.predict_descriptor(&segment_descriptor(fs, &proposal.interval)?)
    }

    pub fn accumulate_gradients(&mut self, x: &Array2<f64>, targets: &[usize]) -> Result<(f64, f64)> {
        let logits = self.fc.forward_train(x)?;
        let (loss, probs, dlogits) = softmax_xent_batch(logits.view(), targets)?;
        self.fc.backward(&dlogits)?;
        let correct = probs
            .rows()
            .into_iter()
            .zip(targets)
            .filter(|(p, &t)| argmax(p.iter().copied()) == t)
            .count();
        Ok((loss, correct as f64 / targets.len() as f64))
    }

    pub fn loss(&self, x: &Array2<f64>, targets: &[usize]) -> Result<f64> {
        Ok(softmax_xent_batch(self.fc.forward(x)?.view(), targets)?.0)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = ClassifierMeta { kind: CLASSIFIER_KIND.into(), config: self.cfg.clone() };
        let metadata = serde_json::to_string(&meta).map_err(|e| Error::State(e.to_string()))?;
        Ok(Checkpoint { metadata, tensors: self.params().into_iter().map(|p| p.value.clone()).collect() })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: ClassifierMeta = serde_json::from_str(&ck.metadata)
            .map_err(|e| Error::Parse { path: "classifier checkpoint metadata".into(), message: e.to_string() })?;
        if meta.kind != CLASSIFIER_KIND {
            return Err(Error::Parse {
                path: "classifier checkpoint metadata".into(),
                message: format!("checkpoint holds a {:?}, not a classifier", meta.kind),
            });
        }
        let mut model = Self::zeroed(meta.config)?;
        load_tensors(&mut model, &ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Parameterized for Classifier {
    fn params(&self) -> Vec<&Param> {
        self.fc.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.fc.params_mut()
    }
}

/// First index of the maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn train_classifier(
    dataset: &ClassifierDataset,
    cfg: &ClassifierConfig,
    iterations: usize,
    seed: u64,
) -> Result<(Classifier, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Classifier::new(cfg.clone(), &mut rng)?;
    let mut report = TrainReport::default();
    if iterations == 0 {
        return Ok((model, report));
    }
    if let Some(d) = dataset.descriptors.first() {
        if d.len() != cfg.input_dim() {
            return Err(Error::DimensionMismatch("dataset descriptors do not match the classifier config".into()));
        }
    }
    if let Some(&bad) = dataset.labels.iter().find(|&&l| l as usize > cfg.num_classes) {
        return Err(Error::DimensionMismatch(format!("label {bad} exceeds {} classes", cfg.num_classes)));
    }
    for it in 0..iterations {
        let (idx, targets) = make_classifier_batch(&dataset.labels, cfg, &mut rng)?;
        let x = dataset.gather(&idx);
        let (loss, acc) = model.accumulate_gradients(&x, &targets)?;
        if !loss.is_finite() {
            return Err(Error::State(format!("classifier loss diverged at iteration {it}")));
        }
        step_model(&mut model, &cfg.optimizer)?;
        report.losses.push(loss);
        report.accuracies.push(acc);
    }
    Ok((model, report))
}

/// Fraction of the dataset whose argmax matches the label.
pub fn dataset_accuracy(model: &Classifier, dataset: &ClassifierDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (d, &l) in dataset.descriptors.iter().zip(&dataset.labels) {
        if argmax(model.predict_descriptor(d)?.iter().copied()) == l as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
