//! Parallel schedulers. Every unit of work derives its randomness from
//! `(seed, index)`, and results are gathered in index order, so the output
//! does not depend on the number of threads.

use anyhow::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use semicomp_core::harness::{
    baseline_bands, baseline_grids, bbs_replicate, bootstrap_resample, cv_fold, design_censoring_rate,
    fold_assignment, neural_em_replicate, summarize, BaselineBands, BbsReplicate, CvSummary, FitSettings,
    NeuralEmDesign, NeuralEmReplicate,
};
use semicomp_core::risk::RiskKind;
use semicomp_core::SimConfig;

/// Name used for a risk family in tables and on the command line.
pub fn risk_name(kind: RiskKind) -> &'static str {
    match kind {
        RiskKind::None => "none",
        RiskKind::Linear => "linear",
        RiskKind::NonLinear => "non-linear",
        RiskKind::NonMonotonic => "non-monotonic",
    }
}

pub fn cross_validate(
    data: &semicomp_core::Dataset,
    settings: &FitSettings,
    folds: usize,
    horizon: f64,
    seed: u64,
) -> Result<CvSummary> {
    let labels = fold_assignment(data.len(), folds, seed)?;
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|k| cv_fold(data, &labels, k, settings, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvSummary::from_folds(per_fold))
}

pub fn bootstrap_baselines(
    data: &semicomp_core::Dataset,
    settings: &FitSettings,
    resamples: usize,
    seed: u64,
) -> Result<BaselineBands> {
    anyhow::ensure!(resamples >= 1, "at least one resample is required");
    let grids = baseline_grids(data);
    let results: Vec<_> = (0..resamples)
        .into_par_iter()
        .map(|b| bootstrap_resample(data, settings, seed, b, &grids))
        .collect();
    for (b, r) in results.iter().enumerate() {
        if let Err(e) = r {
            log::warn!("bootstrap resample {b} failed: {e}");
        }
    }
    Ok(baseline_bands(grids, results)?)
}

/// Replicates of one Brier-score setting; failed replicates are logged and
/// dropped.
pub fn bbs_study(setting: u8, n: usize, replicates: usize, seed: u64) -> Result<Vec<BbsReplicate>> {
    let rate = design_censoring_rate(&SimConfig::bbs_study(setting, n, seed)?)?;
    let out = (0..replicates)
        .into_par_iter()
        .map(|r| bbs_replicate(setting, n, seed, r, rate))
        .collect::<Vec<_>>();
    Ok(keep_successes(out, "Brier-score"))
}

pub fn neural_em_study(
    design: &NeuralEmDesign,
    replicates: usize,
    seed: u64,
    settings: &FitSettings,
) -> Result<Vec<NeuralEmReplicate>> {
    let rate = design_censoring_rate(&design.sim_config(seed))?;
    let out = (0..replicates)
        .into_par_iter()
        .map(|r| neural_em_replicate(design, r, seed, rate, settings))
        .collect::<Vec<_>>();
    Ok(keep_successes(out, "neural EM"))
}

fn keep_successes<T>(results: Vec<semicomp_core::Result<T>>, study: &str) -> Vec<T> {
    let mut kept = Vec::with_capacity(results.len());
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => kept.push(v),
            Err(e) => log::warn!("{study} replicate {r} failed: {e}"),
        }
    }
    kept
}

/// Row of the Brier-score study table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbsTableRow {
    pub setting: u8,
    pub n: usize,
    pub replicates: usize,
    pub true_ibbs_mean: f64,
    pub true_ibbs_sd: f64,
    pub calculated_ibbs_mean: f64,
    pub calculated_ibbs_sd: f64,
}

impl BbsTableRow {
    pub fn new(setting: u8, n: usize, reps: &[BbsReplicate]) -> Self {
        let (tm, ts) = summarize(&reps.iter().map(|r| r.true_ibbs).collect::<Vec<_>>());
        let (cm, cs) = summarize(&reps.iter().map(|r| r.calculated_ibbs).collect::<Vec<_>>());
        Self {
            setting,
            n,
            replicates: reps.len(),
            true_ibbs_mean: tm,
            true_ibbs_sd: ts,
            calculated_ibbs_mean: cm,
            calculated_ibbs_sd: cs,
        }
    }
}

/// Row of the neural EM study table: frailty variance, integrated Brier
/// score, and per-transition MISE, each as mean and SD over replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralEmTableRow {
    pub n: usize,
    pub theta: f64,
    pub risk: String,
    pub censoring: f64,
    pub replicates: usize,
    pub theta_parametric_mean: f64,
    pub theta_parametric_sd: f64,
    pub theta_neural_mean: f64,
    pub theta_neural_sd: f64,
    pub ibbs_truth_mean: f64,
    pub ibbs_parametric_mean: f64,
    pub ibbs_parametric_sd: f64,
    pub ibbs_neural_mean: f64,
    pub ibbs_neural_sd: f64,
    pub mise_parametric_1: f64,
    pub mise_parametric_2: f64,
    pub mise_parametric_3: f64,
    pub mise_neural_1: f64,
    pub mise_neural_2: f64,
    pub mise_neural_3: f64,
}

impl NeuralEmTableRow {
    pub fn new(design: &NeuralEmDesign, reps: &[NeuralEmReplicate]) -> Self {
        let col = |f: &dyn Fn(&NeuralEmReplicate) -> f64| summarize(&reps.iter().map(f).collect::<Vec<_>>());
        let (tp, tps) = col(&|r| r.theta_parametric);
        let (tn, tns) = col(&|r| r.theta_neural);
        let (bt, _) = col(&|r| r.ibbs_truth);
        let (bp, bps) = col(&|r| r.ibbs_parametric);
        let (bn, bns) = col(&|r| r.ibbs_neural);
        let mp = [0, 1, 2].map(|g| col(&|r| r.mise_parametric[g]).0);
        let mn = [0, 1, 2].map(|g| col(&|r| r.mise_neural[g]).0);
        Self {
            n: design.n,
            theta: design.theta,
            risk: risk_name(design.risk).to_owned(),
            censoring: design.censoring,
            replicates: reps.len(),
            theta_parametric_mean: tp,
            theta_parametric_sd: tps,
            theta_neural_mean: tn,
            theta_neural_sd: tns,
            ibbs_truth_mean: bt,
            ibbs_parametric_mean: bp,
            ibbs_parametric_sd: bps,
            ibbs_neural_mean: bn,
            ibbs_neural_sd: bns,
            mise_parametric_1: mp[0],
            mise_parametric_2: mp[1],
            mise_parametric_3: mp[2],
            mise_neural_1: mn[0],
            mise_neural_2: mn[1],
            mise_neural_3: mn[2],
        }
    }
}

/// Flat per-replicate record of the neural EM study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralEmRawRow {
    pub n: usize,
    pub theta: f64,
    pub risk: String,
    pub censoring: f64,
    pub replicate: usize,
    pub theta_parametric: f64,
    pub theta_neural: f64,
    pub ibbs_truth: f64,
    pub ibbs_parametric: f64,
    pub ibbs_neural: f64,
    pub mise_parametric_1: f64,
    pub mise_parametric_2: f64,
    pub mise_parametric_3: f64,
    pub mise_neural_1: f64,
    pub mise_neural_2: f64,
    pub mise_neural_3: f64,
}

impl From<&NeuralEmReplicate> for NeuralEmRawRow {
    fn from(r: &NeuralEmReplicate) -> Self {
        Self {
            n: r.design.n,
            theta: r.design.theta,
            risk: risk_name(r.design.risk).to_owned(),
            censoring: r.design.censoring,
            replicate: r.replicate,
            theta_parametric: r.theta_parametric,
            theta_neural: r.theta_neural,
            ibbs_truth: r.ibbs_truth,
            ibbs_parametric: r.ibbs_parametric,
            ibbs_neural: r.ibbs_neural,
            mise_parametric_1: r.mise_parametric[0],
            mise_parametric_2: r.mise_parametric[1],
            mise_parametric_3: r.mise_parametric[2],
            mise_neural_1: r.mise_neural[0],
            mise_neural_2: r.mise_neural[1],
            mise_neural_3: r.mise_neural[2],
        }
    }
}
