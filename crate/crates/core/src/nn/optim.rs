use serde::{Deserialize, Serialize};

use super::{Param, Parameterized};
use crate::error::{Error, Result};

/// Momentum SGD with L2 weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    /// Ranker schedule: lr 0.1, momentum 0.9, decay 5e-5.
    pub fn ranker_default() -> Self {
        Self { learning_rate: 0.1, momentum: 0.9, weight_decay: 5e-5 }
    }

    /// Classifier schedule: lr 0.001, momentum 0.9, decay 5e-5.
    pub fn classifier_default() -> Self {
        Self { learning_rate: 0.001, momentum: 0.9, weight_decay: 5e-5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        Ok(())
    }
}

/// `v <- momentum * v + (grad + decay * w)`, then `w <- w - lr * v`.
/// Decay only applies to parameters flagged for it.
pub fn sgd_step(param: &mut Param, cfg: &OptimizerConfig) -> Result<()> {
    if param.grad.dim() != param.value.dim() || param.velocity.dim() != param.value.dim() {
        return Err(Error::Shape("parameter, gradient and velocity shapes differ".into()));
    }
    let decay = if param.decay { cfg.weight_decay } else { 0.0 };
    ndarray::Zip::from(&mut param.value)
        .and(&mut param.velocity)
        .and(&param.grad)
        .for_each(|w, v, &g| {
            *v = cfg.momentum * *v + (g + decay * *w);
            *w -= cfg.learning_rate * *v;
        });
    Ok(())
}

/// Step every parameter of `model`, then clear gradients.
pub fn step_model<M: Parameterized + ?Sized>(model: &mut M, cfg: &OptimizerConfig) -> Result<()> {
    for p in model.params_mut() {
        sgd_step(p, cfg)?;
        p.zero_grad();
    }
    Ok(())
}
