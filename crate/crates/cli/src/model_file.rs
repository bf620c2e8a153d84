//! Model snapshots: the neural EM state and the parametric comparator share
//! one loader that recognises either layout.

use anyhow::{bail, ensure, Result};
use serde::{Deserialize, Serialize};

use semicomp_core::harness::{FittedModel, ModelKind};
use semicomp_core::hazard::{Baseline, StepHazard};
use semicomp_core::likelihood::ModelState;
use semicomp_core::risk::{LinearRisk, NeuralRisk, RiskModel};
use semicomp_core::{ParametricModel, RiskNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    /// 1-based transition index.
    pub transition: usize,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
}

/// Networks plus the trainable `xi = log theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralWeights {
    pub networks: [RiskNetwork; 3],
    pub xi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RiskSnapshot {
    Neural(NeuralWeights),
    Linear(LinearRisk),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub theta: f64,
    pub baselines: Vec<BaselineEntry>,
    pub risk_model: RiskSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Snapshot(Snapshot),
    Parametric(ParametricModel),
}

impl ModelFile {
    pub fn from_fitted(model: &FittedModel, parametric: Option<&ParametricModel>) -> Result<Self> {
        if model.kind == ModelKind::Parametric {
            if let Some(p) = parametric {
                return Ok(ModelFile::Parametric(p.clone()));
            }
        }
        Snapshot::from_state(&model.state).map(ModelFile::Snapshot)
    }

    pub fn to_state(&self) -> Result<ModelState> {
        match self {
            ModelFile::Parametric(p) => {
                p.validate()?;
                Ok(p.to_state()?)
            }
            ModelFile::Snapshot(s) => s.to_state(),
        }
    }
}

impl Snapshot {
    pub fn from_state(state: &ModelState) -> Result<Self> {
        let mut baselines = Vec::with_capacity(3);
        for (g, b) in state.baselines.iter().enumerate() {
            let Baseline::Step(h) = b else {
                bail!("only step baselines are stored in a snapshot");
            };
            baselines.push(BaselineEntry {
                transition: g + 1,
                jump_times: h.jump_times().to_vec(),
                jump_sizes: h.jump_sizes().to_vec(),
            });
        }
        let risk_model = match &state.risk {
            RiskModel::Neural(n) => RiskSnapshot::Neural(NeuralWeights {
                networks: n.networks.clone(),
                xi: state.theta.ln(),
            }),
            RiskModel::Linear(l) => RiskSnapshot::Linear(l.clone()),
            _ => bail!("only neural or linear risk models are stored in a snapshot"),
        };
        Ok(Self {
            theta: state.theta,
            baselines,
            risk_model,
        })
    }

    pub fn to_state(&self) -> Result<ModelState> {
        ensure!(self.baselines.len() == 3, "a snapshot needs three baselines");
        let mut steps: [Option<StepHazard>; 3] = Default::default();
        for b in &self.baselines {
            ensure!((1..=3).contains(&b.transition), "transition must be 1, 2 or 3");
            let slot = &mut steps[b.transition - 1];
            ensure!(slot.is_none(), "transition {} listed twice", b.transition);
            *slot = Some(StepHazard::new(b.jump_times.clone(), b.jump_sizes.clone())?);
        }
        let baselines = steps.map(|s| Baseline::Step(s.unwrap_or_default()));
        let risk = match &self.risk_model {
            RiskSnapshot::Neural(w) => {
                let dims = w.networks.each_ref().map(RiskNetwork::input_dim);
                ensure!(dims[0] == dims[1] && dims[1] == dims[2], "sub-networks disagree on the input dimension");
                RiskModel::Neural(NeuralRisk {
                    networks: w.networks.clone(),
                })
            }
            RiskSnapshot::Linear(l) => RiskModel::Linear(l.clone()),
        };
        Ok(ModelState::new(baselines, self.theta, risk)?)
    }
}
