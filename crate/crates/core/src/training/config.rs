use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the segmentation loss.
    pub lambda1: f64,
    /// Weight of the nuclearity-relation loss.
    pub lambda2: f64,
    /// Exponent of the length penalty `1 + (n - m)^beta`.
    pub beta: f64,
    /// Probability of descending on the predicted split under the dynamic oracle.
    pub alpha: f64,
    pub penalty_enabled: bool,
    /// Epochs trained with teacher forcing before the dynamic oracle starts.
    pub oracle_start_epoch: usize,
    pub lr: f64,
    /// Documents per micro-batch.
    pub batch_size: usize,
    /// Micro-batches whose gradients are summed before each update.
    pub grad_accum: usize,
    pub dropout: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            beta: 0.35,
            alpha: 0.65,
            penalty_enabled: true,
            oracle_start_epoch: 50,
            lr: 0.001,
            batch_size: 4,
            grad_accum: 2,
            dropout: 0.5,
            adam_eps: 1e-6,
            max_epochs: 100,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return bad("lr and adam_eps must be positive".into());
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            return bad("batch_size and grad_accum must be positive".into());
        }
        Ok(())
    }
}
