//! Run configuration: one JSON document, overridden field by field by
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use semicomp_core::harness::{FitSettings, ModelKind};
use semicomp_core::{EmConfig, SimConfig, TrainConfig};

use crate::io::read_json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    BbsValidation,
    NeuralEmValidation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub preds: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub model: ModelKind,
    pub em: EmConfig,
    pub train: TrainConfig,
    pub sim: Option<SimConfig>,
    pub folds: usize,
    pub bootstrap_resamples: usize,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub study: Option<Study>,
    pub replicates: Option<usize>,
    /// Use the replicate counts of the original studies.
    pub full_scale: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            truth: None,
            trace: None,
            model_path: None,
            preds: None,
            summary: None,
            model: ModelKind::Neural,
            em: EmConfig::default(),
            train: TrainConfig::default(),
            sim: None,
            folds: 5,
            bootstrap_resamples: 50,
            horizon: None,
            seed: 0,
            study: None,
            replicates: None,
            full_scale: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.folds >= 2, "folds must be at least 2");
        ensure!(self.bootstrap_resamples >= 1, "bootstrap_resamples must be at least 1");
        if let Some(h) = self.horizon {
            ensure!(h > 0.0 && h.is_finite(), "horizon must be positive");
        }
        let paths: Vec<&PathBuf> = [
            &self.data,
            &self.out,
            &self.truth,
            &self.trace,
            &self.model_path,
            &self.preds,
            &self.summary,
        ]
        .into_iter()
        .flatten()
        .collect();
        for (i, a) in paths.iter().enumerate() {
            ensure!(!paths[..i].contains(a), "path {} is used twice", a.display());
        }
        self.em.validate()?;
        self.train.validate()?;
        if let Some(sim) = &self.sim {
            sim.validate()?;
        }
        Ok(())
    }

    /// Fit settings seeded from the run seed.
    pub fn fit_settings(&self) -> FitSettings {
        let mut s = FitSettings {
            kind: self.model,
            em: self.em.clone(),
            train: self.train.clone(),
        };
        s.em.seed = self.seed;
        s.train.seed = self.seed;
        s
    }
}
