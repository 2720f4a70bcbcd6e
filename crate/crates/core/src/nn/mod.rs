//! Small neural-network toolkit with hand-written reverse-mode gradients.
//!
//! Everything runs on `f64`. Sequences are batched by stacking them row-wise:
//! a [`SeqBatch`] of `B` sequences of length `n` with `C` channels is a
//! `(B * n) x C` matrix. Flattening a batch to `B x (n * C)` is then a free
//! reshape of the row-major buffer.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;
pub use layers::{
    avg_pool_forward, softmax, softmax_xent, softmax_xent_batch, temporal_conv_forward, AvgPool,
    Linear, Relu, TemporalConv, CONV_KERNEL, POOL_SIZE,
};
pub use optim::{sgd_step, OptimizerConfig};

/// Time x channels matrix.
pub type Tensor2 = Array2<f64>;

/// A trainable tensor with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    pub velocity: Array2<f64>,
    /// Whether weight decay applies (weights yes, biases no).
    pub decay: bool,
}

impl Param {
    pub fn new(value: Array2<f64>, decay: bool) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        let velocity = Array2::zeros(value.raw_dim());
        Self { value, grad, velocity, decay }
    }

    pub fn zeros(rows: usize, cols: usize, decay: bool) -> Self {
        Self::new(Array2::zeros((rows, cols)), decay)
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit));
        Self::new(value, true)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns trainable parameters, in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// `B` stacked sequences of length `len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub data: Array2<f64>,
    pub len: usize,
}

impl SeqBatch {
    pub fn new(data: Array2<f64>, len: usize) -> Result<Self> {
        if len == 0 || data.nrows() % len != 0 {
            return Err(Error::Shape(format!(
                "{} rows cannot hold sequences of length {len}",
                data.nrows()
            )));
        }
        Ok(Self { data, len })
    }

    /// A batch holding one sequence.
    pub fn single(x: Tensor2) -> Self {
        let len = x.nrows();
        Self { data: x, len }
    }

    /// Stack equally shaped sequences.
    pub fn stack<'a, I>(seqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = ndarray::ArrayView2<'a, f64>>,
    {
        let views: Vec<_> = seqs.into_iter().collect();
        let first = views.first().ok_or_else(|| Error::Shape("cannot stack zero sequences".into()))?;
        let len = first.nrows();
        if views.iter().any(|v| v.dim() != first.dim()) {
            return Err(Error::Shape("cannot stack sequences of different shapes".into()));
        }
        let data = ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| Error::Shape(format!("stacking sequences: {e}")))?;
        Self::new(data, len)
    }

    pub fn batch_size(&self) -> usize {
        self.data.nrows() / self.len
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    /// `B x (len * C)` view of the same buffer.
    pub fn flatten(self) -> Array2<f64> {
        let b = self.batch_size();
        let w = self.len * self.channels();
        let data = self.data.as_standard_layout().into_owned();
        data.into_shape_with_order((b, w)).expect("row-major reshape")
    }

    pub fn unflatten(flat: Array2<f64>, len: usize) -> Result<Self> {
        let (b, w) = flat.dim();
        if len == 0 || w % len != 0 {
            return Err(Error::Shape(format!("width {w} is not a multiple of length {len}")));
        }
        let data = flat
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * len, w / len))
            .expect("row-major reshape");
        Ok(Self { data, len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn flatten_round_trip() {
        let data = Array2::from_shape_fn((6, 2), |(r, c)| (r * 2 + c) as f64);
        let b = SeqBatch::new(data.clone(), 3).unwrap();
        let flat = b.flatten();
        assert_eq!(flat.dim(), (2, 6));
        assert_eq!(flat.row(1).to_vec(), vec![6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(SeqBatch::unflatten(flat, 3).unwrap().data, data);
    }

    #[test]
    fn stack_checks_shapes() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[5.0, 6.0], [7.0, 8.0]];
        let s = SeqBatch::stack([a.view(), b.view()]).unwrap();
        assert_eq!(s.batch_size(), 2);
        assert!(SeqBatch::new(Array2::zeros((5, 1)), 2).is_err());
    }
}
