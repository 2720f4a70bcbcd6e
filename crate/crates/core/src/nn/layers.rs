//! Layers used by the ranker and classifier.
//!
//! Each layer has a pure `forward` for inference and a `forward_train` that
//! keeps what `backward` needs. `backward` adds into the parameter gradients
//! and returns the gradient with respect to the layer input.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{Param, Parameterized, SeqBatch, Tensor2};
use crate::error::{Error, Result};

pub const CONV_KERNEL: usize = 5;
pub const POOL_SIZE: usize = 3;

/// Valid temporal convolution, kernel 5, stride 1.
///
/// `weight` is `c_out x (c_in * 5)` with column `c * 5 + tau` holding
/// `w[o, c, tau]`, so `out[t, o] = bias[o] + sum_{tau, c} w[o, c, tau] * x[t + tau, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConv {
    pub weight: Param,
    pub bias: Param,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvCache {
    cols: Array2<f64>,
    in_len: usize,
}

impl TemporalConv {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let fan_in = c_in * CONV_KERNEL;
        let fan_out = c_out * CONV_KERNEL;
        Self {
            weight: Param::glorot(c_out, c_in * CONV_KERNEL, fan_in, fan_out, rng),
            bias: Param::zeros(1, c_out, false),
            cache: None,
        }
    }

    pub fn from_params(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.ncols() % CONV_KERNEL != 0 || bias.len() != weight.nrows() {
            return Err(Error::Shape(format!(
                "conv weight {:?} / bias {} mismatch",
                weight.dim(),
                bias.len()
            )));
        }
        let c_out = bias.len();
        Ok(Self {
            weight: Param::new(weight, true),
            bias: Param::new(bias.into_shape_with_order((1, c_out)).expect("1-row bias"), false),
            cache: None,
        })
    }

    pub fn c_in(&self) -> usize {
        self.weight.value.ncols() / CONV_KERNEL
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.nrows()
    }

    fn im2col(&self, x: &SeqBatch) -> Result<Array2<f64>> {
        let n = x.len;
        if n < CONV_KERNEL {
            return Err(Error::Shape(format!("temporal conv needs length >= {CONV_KERNEL}, got {n}")));
        }
        if x.channels() != self.c_in() {
            return Err(Error::Shape(format!(
                "temporal conv expects {} channels, got {}",
                self.c_in(),
                x.channels()
            )));
        }
        let c_in = self.c_in();
        let out_len = n - CONV_KERNEL + 1;
        let b = x.batch_size();
        let mut cols = Array2::zeros((b * out_len, c_in * CONV_KERNEL));
        for s in 0..b {
            for t in 0..out_len {
                let mut row = cols.row_mut(s * out_len + t);
                for tau in 0..CONV_KERNEL {
                    let src = x.data.row(s * n + t + tau);
                    for c in 0..c_in {
                        row[c * CONV_KERNEL + tau] = src[c];
                    }
                }
            }
        }
        Ok(cols)
    }

    fn apply(&self, cols: &Array2<f64>, out_len: usize) -> SeqBatch {
        let mut out = cols.dot(&self.weight.value.t());
        out += &self.bias.value.row(0);
        SeqBatch { data: out, len: out_len }
    }

    pub fn forward(&self, x: &SeqBatch) -> Result<SeqBatch> {
        let cols = self.im2col(x)?;
        Ok(self.apply(&cols, x.len - CONV_KERNEL + 1))
    }

    pub fn forward_train(&mut self, x: &SeqBatch) -> Result<SeqBatch> {
        let cols = self.im2col(x)?;
        let out = self.apply(&cols, x.len - CONV_KERNEL + 1);
        self.cache = Some(ConvCache { cols, in_len: x.len });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &SeqBatch) -> Result<SeqBatch> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("temporal conv backward before forward".into()))?;
        let out_len = cache.in_len - CONV_KERNEL + 1;
        if grad.len != out_len || grad.data.nrows() != cache.cols.nrows() || grad.channels() != self.c_out() {
            return Err(Error::Shape("temporal conv upstream gradient shape".into()));
        }
        self.weight.grad += &grad.data.t().dot(&cache.cols);
        self.bias.grad += &grad.data.sum_axis(Axis(0));

        let dcols = grad.data.dot(&self.weight.value);
        let c_in = self.c_in();
        let n = cache.in_len;
        let b = grad.batch_size();
        let mut dx = Array2::zeros((b * n, c_in));
        for s in 0..b {
            for t in 0..out_len {
                let drow = dcols.row(s * out_len + t);
                for tau in 0..CONV_KERNEL {
                    let mut dst = dx.row_mut(s * n + t + tau);
                    for c in 0..c_in {
                        dst[c] += drow[c * CONV_KERNEL + tau];
                    }
                }
            }
        }
        Ok(SeqBatch { data: dx, len: n })
    }
}

impl Parameterized for TemporalConv {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Single-sequence convolution; `x` is `n x c_in`, output `(n - 4) x c_out`.
pub fn temporal_conv_forward(x: &Tensor2, conv: &TemporalConv) -> Result<Tensor2> {
    Ok(conv.forward(&SeqBatch::single(x.clone()))?.data)
}

/// Temporal average pooling, window 3, stride 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AvgPool {
    in_len: Option<usize>,
}

impl AvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&self, x: &SeqBatch) -> Result<SeqBatch> {
        let n = x.len;
        if n < POOL_SIZE {
            return Err(Error::Shape(format!("avg pool needs length >= {POOL_SIZE}, got {n}")));
        }
        let out_len = n - POOL_SIZE + 1;
        let b = x.batch_size();
        let mut out = Array2::zeros((b * out_len, x.channels()));
        for s in 0..b {
            let src = x.data.slice(s![s * n..(s + 1) * n, ..]);
            for t in 0..out_len {
                let mut dst = out.row_mut(s * out_len + t);
                for i in 0..POOL_SIZE {
                    dst += &src.row(t + i);
                }
                dst /= POOL_SIZE as f64;
            }
        }
        Ok(SeqBatch { data: out, len: out_len })
    }

    pub fn forward_train(&mut self, x: &SeqBatch) -> Result<SeqBatch> {
        let out = self.forward(x)?;
        self.in_len = Some(x.len);
        Ok(out)
    }

    pub fn backward(&mut self, grad: &SeqBatch) -> Result<SeqBatch> {
        let n = self
            .in_len
            .take()
            .ok_or_else(|| Error::State("avg pool backward before forward".into()))?;
        let out_len = n - POOL_SIZE + 1;
        if grad.len != out_len {
            return Err(Error::Shape("avg pool upstream gradient length".into()));
        }
        let b = grad.batch_size();
        let mut dx = Array2::zeros((b * n, grad.channels()));
        for s in 0..b {
            for t in 0..out_len {
                let g = grad.data.row(s * out_len + t).mapv(|v| v / POOL_SIZE as f64);
                for i in 0..POOL_SIZE {
                    let mut dst = dx.row_mut(s * n + t + i);
                    dst += &g;
                }
            }
        }
        Ok(SeqBatch { data: dx, len: n })
    }
}

/// Single-sequence pooling; `x` is `n x c`, output `(n - 2) x c`.
pub fn avg_pool_forward(x: &Tensor2) -> Result<Tensor2> {
    Ok(AvgPool::new().forward(&SeqBatch::single(x.clone()))?.data)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relu {
    input: Option<Array2<f64>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| v.max(0.0))
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let out = self.forward(x);
        self.input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Result<Array2<f64>> {
        let input = self
            .input
            .take()
            .ok_or_else(|| Error::State("relu backward before forward".into()))?;
        if input.dim() != grad.dim() {
            return Err(Error::Shape("relu upstream gradient shape".into()));
        }
        let mut dx = grad.clone();
        dx.zip_mut_with(&input, |g, &x| {
            if x <= 0.0 {
                *g = 0.0;
            }
        });
        Ok(dx)
    }
}

/// Fully connected layer: `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f64>>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::glorot(outputs, inputs, inputs, outputs, rng),
            bias: Param::zeros(1, outputs, false),
            input: None,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::zeros(outputs, inputs, true),
            bias: Param::zeros(1, outputs, false),
            input: None,
        }
    }

    pub fn from_params(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::Shape(format!(
                "linear weight {:?} / bias {} mismatch",
                weight.dim(),
                bias.len()
            )));
        }
        let out = bias.len();
        Ok(Self {
            weight: Param::new(weight, true),
            bias: Param::new(bias.into_shape_with_order((1, out)).expect("1-row bias"), false),
            input: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.nrows()
    }

    /// Batched forward; `x` is `B x inputs`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.weight.value.t());
        y += &self.bias.value.row(0);
        Ok(y)
    }

    pub fn forward_vec(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        Ok(self.weight.value.dot(&x) + self.bias.value.row(0))
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let y = self.forward(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Result<Array2<f64>> {
        let input = self
            .input
            .take()
            .ok_or_else(|| Error::State("linear backward before forward".into()))?;
        if grad.nrows() != input.nrows() || grad.ncols() != self.outputs() {
            return Err(Error::Shape("linear upstream gradient shape".into()));
        }
        self.weight.grad += &grad.t().dot(&input);
        self.bias.grad += &grad.sum_axis(Axis(0));
        Ok(grad.dot(&self.weight.value))
    }
}

impl Parameterized for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.mapv(|z| (z - max).exp());
    let sum = p.sum();
    p /= sum;
    p
}

/// Cross-entropy of a single example. Returns `(loss, probabilities)`.
pub fn softmax_xent(logits: ArrayView1<'_, f64>, label: usize) -> Result<(f64, Array1<f64>)> {
    if label >= logits.len() {
        return Err(Error::Shape(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = -(logits[label] - max - log_sum);
    Ok((loss, softmax(logits)))
}

/// Mean cross-entropy over a batch, plus `d loss / d logits`.
pub fn softmax_xent_batch(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (b, k) = logits.dim();
    if labels.len() != b || b == 0 {
        return Err(Error::Shape(format!("{} labels for {b} logit rows", labels.len())));
    }
    let mut probs = Array2::zeros((b, k));
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let (loss, p) = softmax_xent(logits.row(i), label)?;
        total += loss;
        probs.row_mut(i).assign(&p);
    }
    let mut grad = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        grad[[i, label]] -= 1.0;
    }
    grad /= b as f64;
    Ok((total / b as f64, probs, grad))
}
