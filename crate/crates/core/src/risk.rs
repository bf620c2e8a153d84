//! Log-risk functions `h1, h2, h3`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{abs, ln_1p};
use crate::neural::RiskNetwork;
use crate::{Dataset, Error, Result};

/// Closed-form log-risk families used by the simulator. Every transition
/// uses coefficients of one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskKind {
    None,
    /// `x' 1`
    Linear,
    /// `sum_j x_j^3`
    NonLinear,
    /// `log(|x' 1| + 1)`
    NonMonotonic,
}

impl RiskKind {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            RiskKind::None => 0.0,
            RiskKind::Linear => x.iter().sum(),
            RiskKind::NonLinear => x.iter().map(|v| v * v * v).sum(),
            RiskKind::NonMonotonic => ln_1p(abs(x.iter().sum())),
        }
    }
}

/// `h_g(x) = x' beta_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRisk {
    pub betas: [Vec<f64>; 3],
}

impl LinearRisk {
    pub fn zeros(p: usize) -> Self {
        Self {
            betas: [alloc::vec![0.0; p], alloc::vec![0.0; p], alloc::vec![0.0; p]],
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, b) in out.iter_mut().zip(&self.betas) {
            if b.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: b.len(),
                    found: x.len(),
                });
            }
            *o = b.iter().zip(x).map(|(b, x)| b * x).sum();
        }
        Ok(out)
    }
}

/// Three sub-networks. Scores are anchored so that `h_g(0) = 0`, which pins
/// the additive constant that the nonparametric baselines would otherwise
/// trade against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralRisk {
    pub networks: [RiskNetwork; 3],
}

impl NeuralRisk {
    pub fn input_dim(&self) -> usize {
        self.networks[0].input_dim()
    }

    pub fn anchors(&self) -> [f64; 3] {
        let zero = alloc::vec![0.0; self.input_dim()];
        let mut out = [0.0; 3];
        for (o, net) in out.iter_mut().zip(&self.networks) {
            *o = net.forward_unchecked(&zero);
        }
        out
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        let anchors = self.anchors();
        self.scores_anchored(x, &anchors)
    }

    /// Anchored scores for every subject; the dataset's covariate dimension
    /// must match the networks.
    pub(crate) fn score_all_unchecked(&self, data: &Dataset) -> Vec<[f64; 3]> {
        let anchors = self.anchors();
        data.covariates()
            .map(|x| {
                let mut out = [0.0; 3];
                for g in 0..3 {
                    out[g] = self.networks[g].forward_unchecked(x) - anchors[g];
                }
                out
            })
            .collect()
    }

    pub(crate) fn scores_anchored(&self, x: &[f64], anchors: &[f64; 3]) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for g in 0..3 {
            out[g] = self.networks[g].forward(x)? - anchors[g];
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RiskModel {
    /// `h = 0` for all transitions.
    Zero,
    Linear(LinearRisk),
    Neural(NeuralRisk),
    /// A known closed-form family, held fixed.
    Truth { family: RiskKind },
}

impl RiskModel {
    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        match self {
            RiskModel::Zero => Ok([0.0; 3]),
            RiskModel::Linear(l) => l.scores(x),
            RiskModel::Neural(n) => n.scores(x),
            RiskModel::Truth { family } => {
                let h = family.eval(x);
                Ok([h; 3])
            }
        }
    }

    /// Scores for every subject.
    pub fn score_all(&self, data: &Dataset) -> Result<Vec<[f64; 3]>> {
        match self {
            RiskModel::Neural(n) => {
                let anchors = n.anchors();
                data.covariates()
                    .map(|x| n.scores_anchored(x, &anchors))
                    .collect()
            }
            _ => data.covariates().map(|x| self.scores(x)).collect(),
        }
    }
}
