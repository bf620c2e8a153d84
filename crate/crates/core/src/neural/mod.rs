//! The N-step: feed-forward log-risk networks, the `-Q/n` loss with its
//! reverse-mode gradient, full-batch Adam, and hyperparameter selection.

mod grid;
mod network;
mod train;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use grid::{grid_search, GridSearch};
pub use network::{Activation, Gradients, Layer, LayerGrad, RiskNetwork};
pub use train::{loss, loss_gradient, train_step, LossGradient, NeuralTrainer, TrainOutcome};

/// One candidate of the hyperparameter grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hidden_layers: usize,
    pub nodes: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub l2: f64,
}

impl GridPoint {
    fn size(&self) -> usize {
        self.hidden_layers * self.nodes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Probability of dropping a hidden unit during training.
    pub dropout: f64,
    /// Penalty on the sum of squared weights (biases excluded).
    pub l2: f64,
    /// Adam steps per call to the trainer.
    pub epochs: usize,
    /// Only full-batch training is supported.
    pub full_batch: bool,
    /// Widths of the hidden layers.
    pub hidden: Vec<usize>,
    /// Whether `log theta` is trained alongside the networks.
    pub train_theta: bool,
    pub grid: Vec<GridPoint>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            dropout: 0.1,
            l2: 1e-4,
            epochs: 10,
            full_batch: true,
            hidden: vec![32, 32],
            train_theta: true,
            grid: default_grid(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(String::from(m)));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return bad("l2 must be non-negative");
        }
        if !self.full_batch {
            return bad("only full-batch training is supported");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers need at least one node");
        }
        Ok(())
    }

    /// This configuration with the architecture and optimizer settings of `point`.
    pub fn with_point(&self, point: &GridPoint) -> Self {
        Self {
            learning_rate: point.learning_rate,
            dropout: point.dropout,
            l2: point.l2,
            hidden: vec![point.nodes; point.hidden_layers],
            ..self.clone()
        }
    }
}

/// `{1, 2} layers x {16, 32, 64} nodes x lr {1e-2, 1e-3} x dropout
/// {0, 0.1, 0.3} x l2 {0, 1e-4, 1e-3}`.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::with_capacity(108);
    for hidden_layers in [1, 2] {
        for nodes in [16, 32, 64] {
            for learning_rate in [1e-2, 1e-3] {
                for dropout in [0.0, 0.1, 0.3] {
                    for l2 in [0.0, 1e-4, 1e-3] {
                        grid.push(GridPoint {
                            hidden_layers,
                            nodes,
                            learning_rate,
                            dropout,
                            l2,
                        });
                    }
                }
            }
        }
    }
    grid
}

/// Mean squared difference between two log-risk functions over a covariate
/// sample.
pub fn mise<'a, T, F>(h_true: T, h_fitted: F, covariates: impl IntoIterator<Item = &'a [f64]>) -> f64
where
    T: Fn(&[f64]) -> f64,
    F: Fn(&[f64]) -> f64,
{
    let (mut total, mut n) = (0.0, 0usize);
    for x in covariates {
        let d = h_true(x) - h_fitted(x);
        total += d * d;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        total / n as f64
    }
}
