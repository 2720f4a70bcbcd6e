//! Context-pair proposal ranker.
//!
//! Each proposal is described by two `n x D` samples: one from the proposal
//! itself and one from a same-center context interval. Each sample goes
//! through its own temporal conv (kernel 5) -> ReLU -> average pool (3)
//! branch, the two flattened responses are concatenated, and two fully
//! connected layers produce background/foreground logits.
//!
//! Training labels come from the best IoU against ground truth: above
//! `iou_pos` is foreground, below `iou_neg` is background, and anything in
//! between never enters a batch. Batches are balanced 1:1.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::Proposal;
use crate::error::{Error, Result};
use crate::interval::GroundTruthAnnotation;
use crate::nn::layers::{AvgPool, Linear, Relu, TemporalConv, CONV_KERNEL, POOL_SIZE};
use crate::nn::optim::step_model;
use crate::nn::{softmax_xent_batch, Checkpoint, OptimizerConfig, Param, Parameterized, SeqBatch};
use crate::sampling::{build_context_pair, ContextPair, FeatureSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    /// Samples per segment.
    pub samples: usize,
    pub feature_dim: usize,
    pub conv_channels: usize,
    pub hidden: usize,
    pub scale_factor: f64,
    pub iou_pos: f64,
    pub iou_neg: f64,
    pub batch_size: usize,
    pub pos_frac: f64,
    /// One conv tower for both branches instead of two.
    pub share_conv: bool,
    /// ReLU between the hidden and output layers.
    pub hidden_relu: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            samples: 16,
            feature_dim: 1,
            conv_channels: 64,
            hidden: 500,
            scale_factor: 2.0,
            iou_pos: 0.7,
            iou_neg: 0.3,
            batch_size: 1024,
            pos_frac: 0.5,
            share_conv: false,
            hidden_relu: true,
            optimizer: OptimizerConfig::ranker_default(),
        }
    }
}

impl RankerConfig {
    pub fn with_feature_dim(feature_dim: usize) -> Self {
        Self { feature_dim, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let min_len = CONV_KERNEL + POOL_SIZE - 1;
        let mut problems = Vec::new();
        if self.samples < min_len {
            problems.push(format!("samples per segment must be >= {min_len}, got {}", self.samples));
        }
        if self.feature_dim == 0 || self.conv_channels == 0 || self.hidden == 0 {
            problems.push("feature_dim, conv_channels and hidden must be positive".to_string());
        }
        if !(self.scale_factor >= 1.0 && self.scale_factor.is_finite()) {
            problems.push(format!("scale_factor must be >= 1, got {}", self.scale_factor));
        }
        if !(0.0 <= self.iou_neg && self.iou_neg < self.iou_pos && self.iou_pos <= 1.0) {
            problems.push(format!("need 0 <= iou_neg < iou_pos <= 1, got {} / {}", self.iou_neg, self.iou_pos));
        }
        if !(self.pos_frac > 0.0 && self.pos_frac < 1.0) {
            problems.push(format!("pos_frac must be in (0, 1), got {}", self.pos_frac));
        }
        if self.batch_size < 2 {
            problems.push("batch_size must be >= 2".to_string());
        }
        if let Err(e) = self.optimizer.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    /// Length of each branch after conv and pooling.
    pub fn branch_len(&self) -> usize {
        self.samples - (CONV_KERNEL - 1) - (POOL_SIZE - 1)
    }

    /// Width of the concatenated branch responses.
    pub fn concat_width(&self) -> usize {
        2 * self.branch_len() * self.conv_channels
    }

    pub fn positives_per_batch(&self) -> usize {
        ((self.batch_size as f64 * self.pos_frac).round() as usize).clamp(1, self.batch_size - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankLabel {
    Positive,
    Negative,
    Ignore,
}

/// Strict thresholds: IoU exactly at either bound is ignored.
pub fn assign_rank_label_with(proposal: &Proposal, gt: &GroundTruthAnnotation, iou_pos: f64, iou_neg: f64) -> RankLabel {
    let best = gt.max_iou(&proposal.interval);
    if best > iou_pos {
        RankLabel::Positive
    } else if best < iou_neg {
        RankLabel::Negative
    } else {
        RankLabel::Ignore
    }
}

pub fn assign_rank_label(proposal: &Proposal, gt: &GroundTruthAnnotation) -> RankLabel {
    assign_rank_label_with(proposal, gt, 0.7, 0.3)
}

/// Indices into a candidate list with their binary targets (1 = foreground).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn count_target(&self, target: usize) -> usize {
        self.targets.iter().filter(|&&t| t == target).count()
    }
}

/// Draws `need` items from `pool`: distinct when the pool is large enough,
/// with replacement otherwise.
pub(crate) fn draw<R: Rng + ?Sized>(pool: &[usize], need: usize, rng: &mut R) -> Vec<usize> {
    if pool.len() >= need {
        index::sample(rng, pool.len(), need).into_iter().map(|i| pool[i]).collect()
    } else {
        (0..need).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

pub fn make_batch_with_rng<R: Rng + ?Sized>(labels: &[RankLabel], cfg: &RankerConfig, rng: &mut R) -> Result<Batch> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == RankLabel::Positive).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == RankLabel::Negative).collect();
    if pos.is_empty() {
        return Err(Error::NoPositives);
    }
    if neg.is_empty() {
        return Err(Error::NoNegatives);
    }
    let n_pos = cfg.positives_per_batch();
    let n_neg = cfg.batch_size - n_pos;
    let mut indices = draw(&pos, n_pos, rng);
    indices.extend(draw(&neg, n_neg, rng));
    let mut targets = vec![1; n_pos];
    targets.extend(std::iter::repeat_n(0, n_neg));
    Ok(Batch { indices, targets })
}

pub fn make_batch(labels: &[RankLabel], cfg: &RankerConfig, seed: u64) -> Result<Batch> {
    make_batch_with_rng(labels, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Labeled context pairs drawn from annotated videos. Ignored proposals are dropped.
#[derive(Debug, Clone, Default)]
pub struct RankerDataset {
    pub pairs: Vec<ContextPair>,
    pub labels: Vec<RankLabel>,
}

impl RankerDataset {
    pub fn push_video(
        &mut self,
        fs: &FeatureSequence,
        gt: &GroundTruthAnnotation,
        anchors: &[Proposal],
        cfg: &RankerConfig,
    ) -> Result<()> {
        if fs.dim() != cfg.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "{}: features have dim {}, ranker expects {}",
                fs.video_id(),
                fs.dim(),
                cfg.feature_dim
            )));
        }
        for p in anchors {
            let label = assign_rank_label_with(p, gt, cfg.iou_pos, cfg.iou_neg);
            if label == RankLabel::Ignore {
                continue;
            }
            self.pairs.push(build_context_pair(fs, p, cfg.samples, cfg.scale_factor)?);
            self.labels.push(label);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, label: RankLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn gather(&self, indices: &[usize]) -> Result<(SeqBatch, SeqBatch)> {
        let inner = SeqBatch::stack(indices.iter().map(|&i| self.pairs[i].inner.values.view()))?;
        let outer = SeqBatch::stack(indices.iter().map(|&i| self.pairs[i].outer.values.view()))?;
        Ok((inner, outer))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Branch {
    conv: TemporalConv,
    relu: Relu,
    pool: AvgPool,
}

impl Branch {
    fn new<R: Rng + ?Sized>(cfg: &RankerConfig, rng: &mut R) -> Self {
        Self {
            conv: TemporalConv::new(cfg.feature_dim, cfg.conv_channels, rng),
            relu: Relu::new(),
            pool: AvgPool::new(),
        }
    }

    fn forward(&self, x: &SeqBatch) -> Result<Array2<f64>> {
        let y = self.conv.forward(x)?;
        let y = SeqBatch { data: self.relu.forward(&y.data), len: y.len };
        Ok(self.pool.forward(&y)?.flatten())
    }

    fn forward_train(&mut self, x: &SeqBatch) -> Result<Array2<f64>> {
        let y = self.conv.forward_train(x)?;
        let y = SeqBatch { data: self.relu.forward_train(&y.data), len: y.len };
        Ok(self.pool.forward_train(&y)?.flatten())
    }

    fn backward(&mut self, grad: Array2<f64>, pooled_len: usize) -> Result<SeqBatch> {
        let g = self.pool.backward(&SeqBatch::unflatten(grad, pooled_len)?)?;
        let g = SeqBatch { data: self.relu.backward(&g.data)?, len: g.len };
        self.conv.backward(&g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranker {
    cfg: RankerConfig,
    /// One branch when convs are shared, else inner then outer.
    branches: Vec<Branch>,
    hidden: Linear,
    hidden_relu: Relu,
    output: Linear,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub accuracies: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RankerMeta {
    kind: String,
    config: RankerConfig,
}

const RANKER_KIND: &str = "tcn-ranker";

impl Ranker {
    pub fn new<R: Rng + ?Sized>(cfg: RankerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let n_branches = if cfg.share_conv { 1 } else { 2 };
        let branches = (0..n_branches).map(|_| Branch::new(&cfg, rng)).collect();
        let hidden = Linear::new(cfg.concat_width(), cfg.hidden, rng);
        let output = Linear::new(cfg.hidden, 2, rng);
        Ok(Self { cfg, branches, hidden, hidden_relu: Relu::new(), output })
    }

    pub fn with_seed(cfg: RankerConfig, seed: u64) -> Result<Self> {
        Self::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn config(&self) -> &RankerConfig {
        &self.cfg
    }

    pub fn output_layer_mut(&mut self) -> &mut Linear {
        &mut self.output
    }

    fn check_inputs(&self, inner: &SeqBatch, outer: &SeqBatch) -> Result<()> {
        let n = self.cfg.samples;
        let d = self.cfg.feature_dim;
        if inner.len != n || outer.len != n || inner.channels() != d || outer.channels() != d {
            return Err(Error::Shape(format!(
                "ranker expects {n}x{d} samples, got {}x{} / {}x{}",
                inner.len,
                inner.channels(),
                outer.len,
                outer.channels()
            )));
        }
        if inner.batch_size() != outer.batch_size() {
            return Err(Error::Shape("inner and outer batch sizes differ".into()));
        }
        Ok(())
    }

    /// Concatenated branch responses, `B x concat_width`.
    pub fn context_features(&self, inner: &SeqBatch, outer: &SeqBatch) -> Result<Array2<f64>> {
        self.check_inputs(inner, outer)?;
        if self.cfg.share_conv {
            let b = inner.batch_size();
            let stacked = SeqBatch::new(concatenate![Axis(0), inner.data, outer.data], inner.len)?;
            let f = self.branches[0].forward(&stacked)?;
            Ok(concatenate![Axis(1), f.slice(s![..b, ..]), f.slice(s![b.., ..])])
        } else {
            let a = self.branches[0].forward(inner)?;
            let c = self.branches[1].forward(outer)?;
            Ok(concatenate![Axis(1), a, c])
        }
    }

    /// Background/foreground logits, `B x 2`.
    pub fn logits(&self, inner: &SeqBatch, outer: &SeqBatch) -> Result<Array2<f64>> {
        let f = self.context_features(inner, outer)?;
        let mut h = self.hidden.forward(&f)?;
        if self.cfg.hidden_relu {
            h = self.hidden_relu.forward(&h);
        }
        self.output.forward(&h)
    }

    /// Foreground probability per batch row.
    pub fn predict(&self, inner: &SeqBatch, outer: &SeqBatch) -> Result<Array1<f64>> {
        let logits = self.logits(inner, outer)?;
        Ok(logits.rows().into_iter().map(|z| crate::nn::softmax(z)[1]).collect())
    }

    /// Foreground probability of a single context pair.
    pub fn forward(&self, pair: &ContextPair) -> Result<f64> {
        let inner = SeqBatch::single(pair.inner.values.clone());
        let outer = SeqBatch::single(pair.outer.values.clone());
        Ok(self.predict(&inner, &outer)?[0])
    }

    /// Forward and backward over one batch; gradients accumulate into the
    /// parameters. Returns `(mean loss, accuracy)`.
    pub fn accumulate_gradients(&mut self, inner: &SeqBatch, outer: &SeqBatch, targets: &[usize]) -> Result<(f64, f64)> {
        self.check_inputs(inner, outer)?;
        let b = inner.batch_size();
        let pooled = self.cfg.branch_len();
        let feats = if self.cfg.share_conv {
            let stacked = SeqBatch::new(concatenate![Axis(0), inner.data, outer.data], inner.len)?;
            let f = self.branches[0].forward_train(&stacked)?;
            concatenate![Axis(1), f.slice(s![..b, ..]), f.slice(s![b.., ..])]
        } else {
            let a = self.branches[0].forward_train(inner)?;
            let c = self.branches[1].forward_train(outer)?;
            concatenate![Axis(1), a, c]
        };
        let mut h = self.hidden.forward_train(&feats)?;
        if self.cfg.hidden_relu {
            h = self.hidden_relu.forward_train(&h);
        }
        let logits = self.output.forward_train(&h)?;
        let (loss, probs, dlogits) = softmax_xent_batch(logits.view(), targets)?;
        let correct = probs
            .rows()
            .into_iter()
            .zip(targets)
            .filter(|(p, &t)| (p[1] > p[0]) == (t == 1))
            .count();

        let mut dh = self.output.backward(&dlogits)?;
        if self.cfg.hidden_relu {
            dh = self.hidden_relu.backward(&dh)?;
        }
        let dfeat = self.hidden.backward(&dh)?;
        let half = dfeat.ncols() / 2;
        let d_inner = dfeat.slice(s![.., ..half]).to_owned();
        let d_outer = dfeat.slice(s![.., half..]).to_owned();
        if self.cfg.share_conv {
            self.branches[0].backward(concatenate![Axis(0), d_inner, d_outer], pooled)?;
        } else {
            self.branches[0].backward(d_inner, pooled)?;
            self.branches[1].backward(d_outer, pooled)?;
        }
        Ok((loss, correct as f64 / b as f64))
    }

    /// Mean loss over a batch without touching gradients.
    pub fn loss(&self, inner: &SeqBatch, outer: &SeqBatch, targets: &[usize]) -> Result<f64> {
        let logits = self.logits(inner, outer)?;
        Ok(softmax_xent_batch(logits.view(), targets)?.0)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = RankerMeta { kind: RANKER_KIND.into(), config: self.cfg.clone() };
        let metadata = serde_json::to_string(&meta).map_err(|e| Error::State(e.to_string()))?;
        let tensors = self.params().into_iter().map(|p| p.value.clone()).collect();
        Ok(Checkpoint { metadata, tensors })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: RankerMeta = serde_json::from_str(&ck.metadata)
            .map_err(|e| Error::Parse { path: "ranker checkpoint metadata".into(), message: e.to_string() })?;
        if meta.kind != RANKER_KIND {
            return Err(Error::Parse {
                path: "ranker checkpoint metadata".into(),
                message: format!("checkpoint holds a {:?}, not a ranker", meta.kind),
            });
        }
        let mut model = Self::with_seed(meta.config, 0)?;
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

impl Parameterized for Ranker {
    fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.branches.iter().flat_map(|b| b.conv.params()).collect();
        out.extend(self.hidden.params());
        out.extend(self.output.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.branches.iter_mut().flat_map(|b| b.conv.params_mut()).collect();
        out.extend(self.hidden.params_mut());
        out.extend(self.output.params_mut());
        out
    }
}

pub(crate) fn load_tensors<M: Parameterized>(model: &mut M, tensors: &[Array2<f64>]) -> Result<()> {
    let params = model.params_mut();
    if params.len() != tensors.len() {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint has {} tensors, model needs {}",
            tensors.len(),
            params.len()
        )));
    }
    for (i, (p, t)) in params.into_iter().zip(tensors).enumerate() {
        if p.value.dim() != t.dim() {
            return Err(Error::DimensionMismatch(format!(
                "tensor {i}: checkpoint shape {:?}, model shape {:?}",
                t.dim(),
                p.value.dim()
            )));
        }
        p.value.assign(t);
    }
    Ok(())
}

/// Runs `iterations` SGD steps on balanced batches drawn from `dataset`.
///
/// The same seed drives initialization and batch sampling, so identical
/// inputs give bit-identical models.
pub fn train_ranker(dataset: &RankerDataset, cfg: &RankerConfig, iterations: usize, seed: u64) -> Result<(Ranker, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Ranker::new(cfg.clone(), &mut rng)?;
    let mut report = TrainReport::default();
    if iterations == 0 {
        return Ok((model, report));
    }
    if let Some(p) = dataset.pairs.first() {
        if p.inner.values.ncols() != cfg.feature_dim || p.inner.n() != cfg.samples {
            return Err(Error::DimensionMismatch("dataset samples do not match the ranker config".into()));
        }
    }
    for it in 0..iterations {
        let batch = make_batch_with_rng(&dataset.labels, cfg, &mut rng)?;
        let (inner, outer) = dataset.gather(&batch.indices)?;
        let (loss, acc) = model.accumulate_gradients(&inner, &outer, &batch.targets)?;
        if !loss.is_finite() {
            return Err(Error::State(format!("ranker loss diverged at iteration {it}")));
        }
        step_model(&mut model, &cfg.optimizer)?;
        report.losses.push(loss);
        report.accuracies.push(acc);
        log::debug!("ranker iter {it}: loss {loss:.5} acc {acc:.3}");
    }
    Ok((model, report))
}

/// Fraction of dataset pairs classified correctly (foreground iff p > 0.5).
pub fn dataset_accuracy(model: &Ranker, dataset: &RankerDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(512) {
        let (inner, outer) = dataset.gather(chunk)?;
        let p = model.predict(&inner, &outer)?;
        correct += chunk
            .iter()
            .zip(p.iter())
            .filter(|(&i, &p)| (p > 0.5) == (dataset.labels[i] == RankLabel::Positive))
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Stable ranking order: score descending, then earlier begin, then smaller scale.
pub fn ranking_order(a: &Proposal, b: &Proposal) -> std::cmp::Ordering {
    b.score_or_zero()
        .total_cmp(&a.score_or_zero())
        .then(a.interval.begin().cmp(&b.interval.begin()))
        .then(a.scale.cmp(&b.scale))
}

/// Scores every anchor and returns them best first.
pub fn rank_proposals(fs: &FeatureSequence, anchors: &[Proposal], model: &Ranker) -> Result<Vec<Proposal>> {
    let cfg = model.config();
    if fs.dim() != cfg.feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "{}: features have dim {}, ranker expects {}",
            fs.video_id(),
            fs.dim(),
            cfg.feature_dim
        )));
    }
    let mut out = Vec::with_capacity(anchors.len());
    for chunk in anchors.chunks(256) {
        let pairs = chunk
            .iter()
            .map(|p| build_context_pair(fs, p, cfg.samples, cfg.scale_factor))
            .collect::<Result<Vec<_>>>()?;
        let inner = SeqBatch::stack(pairs.iter().map(|p| p.inner.values.view()))?;
        let outer = SeqBatch::stack(pairs.iter().map(|p| p.outer.values.view()))?;
        let scores = model.predict(&inner, &outer)?;
        out.extend(chunk.iter().zip(scores.iter()).map(|(p, &s)| Proposal { score: Some(s), ..*p }));
    }
    out.sort_by(ranking_order);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{LabeledInterval, TemporalInterval};
    use crate::nn::gradcheck::{max_relative_error, numeric_gradient};

    fn iv(b: i64, e: i64) -> TemporalInterval {
        TemporalInterval::new(b, e).unwrap()
    }

    fn proposal(b: i64, e: i64) -> Proposal {
        Proposal { interval: iv(b, e), position: 0, scale: 1, score: None }
    }

    fn gt(intervals: &[(i64, i64)]) -> GroundTruthAnnotation {
        let intervals = intervals
            .iter()
            .map(|&(b, e)| LabeledInterval { interval: iv(b, e), class_id: 1 })
            .collect();
        GroundTruthAnnotation::new("v", 100, intervals).unwrap()
    }

    #[test]
    fn label_examples() {
        assert_eq!(assign_rank_label(&proposal(0, 10), &gt(&[(0, 10)])), RankLabel::Positive);
        assert_eq!(assign_rank_label(&proposal(50, 60), &gt(&[(0, 10)])), RankLabel::Negative);
        assert_eq!(assign_rank_label(&proposal(0, 10), &gt(&[])), RankLabel::Negative);
        assert_eq!(assign_rank_label(&proposal(0, 10), &gt(&[(5, 15)])), RankLabel::Ignore);
    }

    #[test]
    fn label_boundaries_are_ignored() {
        // IoU exactly 0.7: [0,7) vs [0,10)
        assert_eq!(assign_rank_label(&proposal(0, 7), &gt(&[(0, 10)])), RankLabel::Ignore);
        // IoU exactly 0.3: [0,3) vs [0,10)
        assert_eq!(assign_rank_label(&proposal(0, 3), &gt(&[(0, 10)])), RankLabel::Ignore);
        assert_eq!(assign_rank_label(&proposal(0, 8), &gt(&[(0, 10)])), RankLabel::Positive);
        assert_eq!(assign_rank_label(&proposal(0, 2), &gt(&[(0, 10)])), RankLabel::Negative);
    }

    #[test]
    fn scarce_positive_is_repeated() {
        let mut labels = vec![RankLabel::Negative; 10_000];
        labels[1234] = RankLabel::Positive;
        let b = make_batch(&labels, &RankerConfig::default(), 3).unwrap();
        assert_eq!(b.len(), 1024);
        assert_eq!(b.indices[..512].iter().filter(|&&i| i == 1234).count(), 512);
        assert_eq!(b.count_target(1), 512);
    }

    #[test]
    fn plentiful_classes_sample_without_replacement() {
        let mut labels = vec![RankLabel::Positive; 600];
        labels.extend(vec![RankLabel::Negative; 600]);
        labels.extend(vec![RankLabel::Ignore; 50]);
        let b = make_batch(&labels, &RankerConfig::default(), 9).unwrap();
        let mut pos: Vec<usize> = b.indices[..512].to_vec();
        let mut neg: Vec<usize> = b.indices[512..].to_vec();
        pos.sort();
        pos.dedup();
        neg.sort();
        neg.dedup();
        assert_eq!((pos.len(), neg.len()), (512, 512));
        assert!(pos.iter().all(|&i| i < 600) && neg.iter().all(|&i| (600..1200).contains(&i)));
        assert_eq!(b, make_batch(&labels, &RankerConfig::default(), 9).unwrap());
    }

    #[test]
    fn batch_errors() {
        let cfg = RankerConfig::default();
        assert!(matches!(make_batch(&[RankLabel::Negative], &cfg, 0), Err(Error::NoPositives)));
        assert!(matches!(make_batch(&[RankLabel::Positive, RankLabel::Ignore], &cfg, 0), Err(Error::NoNegatives)));
    }

    fn small_cfg(share: bool) -> RankerConfig {
        RankerConfig {
            samples: 9,
            feature_dim: 3,
            conv_channels: 2,
            hidden: 4,
            share_conv: share,
            ..RankerConfig::default()
        }
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let mut cfg = RankerConfig::with_feature_dim(4);
        cfg.conv_channels = 2;
        let mut model = Ranker::with_seed(cfg, 1).unwrap();
        *model.output_layer_mut() = Linear::zeros(500, 2);
        let zero = crate::sampling::SampledFeatures { values: Array2::zeros((16, 4)) };
        let pair = ContextPair { inner: zero.clone(), outer: zero };
        assert_eq!(model.forward(&pair).unwrap(), 0.5);
    }

    #[test]
    fn concat_width_shape_algebra() {
        let mut cfg = RankerConfig::with_feature_dim(4);
        cfg.conv_channels = 2;
        assert_eq!(cfg.branch_len(), 10);
        assert_eq!(cfg.concat_width(), 40);
        let model = Ranker::with_seed(cfg, 0).unwrap();
        let x = SeqBatch::single(Array2::ones((16, 4)));
        assert_eq!(model.context_features(&x, &x).unwrap().dim(), (1, 40));
        let bad = SeqBatch::single(Array2::ones((15, 4)));
        assert!(matches!(model.context_features(&bad, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn config_validation() {
        assert!(RankerConfig { samples: 6, ..RankerConfig::with_feature_dim(2) }.validate().is_err());
        assert!(RankerConfig { iou_neg: 0.8, ..RankerConfig::with_feature_dim(2) }.validate().is_err());
        assert!(RankerConfig { pos_frac: 1.0, ..RankerConfig::with_feature_dim(2) }.validate().is_err());
        assert!(RankerConfig { samples: 7, ..RankerConfig::with_feature_dim(2) }.validate().is_ok());
    }

    fn random_batch(cfg: &RankerConfig, b: usize, seed: u64) -> (SeqBatch, SeqBatch, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |_| Array2::from_shape_simple_fn((b * cfg.samples, cfg.feature_dim), || rng.random_range(-1.0..1.0));
        let inner = SeqBatch::new(gen(0), cfg.samples).unwrap();
        let outer = SeqBatch::new(gen(1), cfg.samples).unwrap();
        let targets = (0..b).map(|i| i % 2).collect();
        (inner, outer, targets)
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for share in [false, true] {
            let cfg = small_cfg(share);
            let mut model = Ranker::with_seed(cfg.clone(), 5).unwrap();
            let (inner, outer, targets) = random_batch(&cfg, 3, 11);
            model.zero_grad();
            model.accumulate_gradients(&inner, &outer, &targets).unwrap();
            let analytic: Vec<Array2<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
            for (pi, expected) in analytic.iter().enumerate() {
                let base = model.clone();
                let numeric = numeric_gradient(&base.params()[pi].value, 1e-5, |v| {
                    let mut m = base.clone();
                    m.params_mut()[pi].value.assign(v);
                    m.loss(&inner, &outer, &targets).unwrap()
                });
                let err = max_relative_error(expected, &numeric);
                assert!(err < 1e-4, "param {pi} (share={share}): rel err {err}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = Ranker::with_seed(small_cfg(false), 2).unwrap();
        let ck = model.to_checkpoint().unwrap();
        let back = Ranker::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back.to_checkpoint().unwrap().to_bytes().unwrap(), ck.to_bytes().unwrap());
        let mut wrong = ck.clone();
        wrong.tensors.pop();
        assert!(Ranker::from_checkpoint(&wrong).is_err());
    }

    #[test]
    fn zero_iterations_keep_initial_weights() {
        let cfg = small_cfg(false);
        let (model, report) = train_ranker(&RankerDataset::default(), &cfg, 0, 42).unwrap();
        assert!(report.losses.is_empty());
        assert_eq!(model, Ranker::with_seed(cfg, 42).unwrap());
    }

    #[test]
    fn ranking_ties_break_by_begin_then_scale() {
        let mut ps = vec![
            Proposal { interval: iv(10, 20), position: 1, scale: 1, score: Some(0.5) },
            Proposal { interval: iv(0, 20), position: 0, scale: 2, score: Some(0.5) },
            Proposal { interval: iv(0, 10), position: 0, scale: 1, score: Some(0.5) },
            Proposal { interval: iv(30, 40), position: 3, scale: 1, score: Some(0.9) },
        ];
        ps.sort_by(ranking_order);
        let order: Vec<(i64, u32)> = ps.iter().map(|p| (p.interval.begin(), p.scale)).collect();
        assert_eq!(order, vec![(30, 1), (0, 1), (0, 2), (10, 1)]);
    }
}
