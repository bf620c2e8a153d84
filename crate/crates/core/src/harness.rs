//! Units of work for cross-validation, bootstrap, and the simulation
//! studies. Each unit is deterministic given `(seed, index)`; the `semicomp`
//! crate schedules them in parallel.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::em::{run_em, EmConfig, RiskSpec, TraceRow};
use crate::likelihood::{joint_event_free_survival_scored, ModelState};
use crate::math::{mean, quantile_sorted, sample_sd};
use crate::metrics::{integrated_bbs, BbsCurve, CensoringCurve, CensoringSurvival, DEFAULT_POINTS};
use crate::neural::{mise, TrainConfig};
use crate::risk::RiskKind;
use crate::rng::{derive_seed, stream};
use crate::sim::{calibrate_censoring_rate, simulate_with_rate, true_survival, Censoring, SimConfig};
use crate::weibull::{fit_parametric, ParametricModel};
use crate::{Dataset, Error, Result};

const FOLD_STREAM: u64 = 0xF01D;
const BOOTSTRAP_STREAM: u64 = 0xB007;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Weibull baselines with linear log-risk.
    Parametric,
    /// Step baselines with network log-risk, fitted by neural EM.
    Neural,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub kind: ModelKind,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl FitSettings {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            em: EmConfig::default(),
            train: TrainConfig::default(),
        }
    }

    /// Same settings with the EM seed replaced by a stream of `seed`.
    pub fn reseeded(&self, seed: u64, index: u64) -> Self {
        let mut s = self.clone();
        s.em.seed = derive_seed(seed, index);
        s.train.seed = s.em.seed;
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub state: ModelState,
    pub log_likelihood: f64,
    /// EM iteration trace (empty for parametric fits).
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl FittedModel {
    pub fn fit(data: &Dataset, settings: &FitSettings) -> Result<Self> {
        match settings.kind {
            ModelKind::Parametric => {
                let fit = fit_parametric(data)?;
                Ok(Self::from_parametric(&fit.model, fit.log_likelihood)?)
            }
            ModelKind::Neural => {
                let em = run_em(data, &RiskSpec::Neural(settings.train.clone()), &settings.em)?;
                Ok(Self {
                    kind: ModelKind::Neural,
                    log_likelihood: em.log_likelihood(),
                    converged: em.converged,
                    trace: em.trace,
                    state: em.state,
                })
            }
        }
    }

    pub fn from_parametric(model: &ParametricModel, log_likelihood: f64) -> Result<Self> {
        Ok(Self {
            kind: ModelKind::Parametric,
            state: model.to_state()?,
            log_likelihood,
            trace: Vec::new(),
            converged: true,
        })
    }

    pub fn theta(&self) -> f64 {
        self.state.theta
    }

    pub fn cumulative_baseline(&self, g: usize, t: f64) -> f64 {
        self.state.baselines[g].cumulative(t)
    }

    /// Predicted joint event-free survival of every subject in `data`, as a
    /// function of time.
    pub fn predictor<'a>(&'a self, data: &Dataset) -> Result<impl FnMut(f64) -> Result<Vec<f64>> + 'a> {
        let scores = self.state.scores(data)?;
        Ok(move |t: f64| {
            Ok(scores
                .iter()
                .map(|h| joint_event_free_survival_scored(h, t, &self.state.baselines, self.state.theta))
                .collect())
        })
    }

    pub fn integrated_bbs(&self, data: &Dataset, g: &impl CensoringSurvival, horizon: f64) -> Result<BbsCurve> {
        integrated_bbs(data, self.predictor(data)?, g, horizon, DEFAULT_POINTS)
    }
}

/// Seeded fold labels in `0..folds`, balanced to within one subject.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("at least two folds are required".into()));
    }
    if n < folds {
        return Err(Error::FoldTooSmall { n, folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, FOLD_STREAM));
    let mut labels = alloc::vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = k % folds;
    }
    Ok(labels)
}

/// Splits subjects into training and held-out indices for `fold`.
pub fn split(labels: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..labels.len()).partition(|&i| labels[i] != fold)
}

/// Trains on every fold but `fold` and returns the held-out iBBS, with the
/// censoring curve estimated from the training folds only.
pub fn cv_fold(data: &Dataset, labels: &[usize], fold: usize, settings: &FitSettings, horizon: f64) -> Result<f64> {
    let (train_idx, test_idx) = split(labels, fold);
    assert!(train_idx.iter().all(|&i| labels[i] != fold) && test_idx.iter().all(|&i| labels[i] == fold));
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::FoldTooSmall {
            n: labels.len(),
            folds: fold + 1,
        });
    }
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let g = CensoringCurve::reverse_km(&train);
    let model = FittedModel::fit(&train, &settings.reseeded(settings.em.seed, fold as u64 + 1))?;
    Ok(model.integrated_bbs(&test, &g, horizon)?.integrated)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl CvSummary {
    pub fn from_folds(per_fold: Vec<f64>) -> Self {
        Self {
            mean: mean(&per_fold),
            sd: sample_sd(&per_fold),
            per_fold,
        }
    }
}

/// Sequential k-fold cross-validation of the integrated Brier score.
pub fn cross_validate(data: &Dataset, settings: &FitSettings, folds: usize, horizon: f64, seed: u64) -> Result<CvSummary> {
    let labels = fold_assignment(data.len(), folds, seed)?;
    let per_fold = (0..folds)
        .map(|k| cv_fold(data, &labels, k, settings, horizon))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvSummary::from_folds(per_fold))
}

/// Evaluation grids for the three baselines: 100 points from 0 to the
/// largest observed event time of each transition (sojourn scale for the
/// third).
pub fn baseline_grids(data: &Dataset) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|g| {
        let hi = data.event_times(g).into_iter().fold(0.0, f64::max);
        (0..DEFAULT_POINTS)
            .map(|k| hi * k as f64 / (DEFAULT_POINTS - 1) as f64)
            .collect()
    })
}

/// Refits on resample `index` and evaluates the cumulative baselines.
pub fn bootstrap_resample(
    data: &Dataset,
    settings: &FitSettings,
    seed: u64,
    index: usize,
    grids: &[Vec<f64>; 3],
) -> Result<[Vec<f64>; 3]> {
    let mut rng = stream(derive_seed(seed, BOOTSTRAP_STREAM), index as u64);
    let n = data.len();
    let picks: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
    let model = FittedModel::fit(&data.subset(&picks), &settings.reseeded(seed, index as u64))?;
    Ok([0, 1, 2].map(|g| grids[g].iter().map(|&t| model.cumulative_baseline(g, t)).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineBands {
    pub grids: [Vec<f64>; 3],
    pub mean: [Vec<f64>; 3],
    pub lower: [Vec<f64>; 3],
    pub upper: [Vec<f64>; 3],
    pub succeeded: usize,
    pub failed: usize,
}

/// Pointwise mean and 2.5/97.5 percentiles of refitted curves. Fails when
/// more than a fifth of the refits failed.
pub fn baseline_bands(grids: [Vec<f64>; 3], results: Vec<Result<[Vec<f64>; 3]>>) -> Result<BaselineBands> {
    let total = results.len();
    let curves: Vec<[Vec<f64>; 3]> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = total - curves.len();
    if curves.is_empty() || failed * 5 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    let stat = |g: usize, f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..grids[g].len())
            .map(|k| {
                let mut col: Vec<f64> = curves.iter().map(|c| c[g][k]).collect();
                col.sort_by(f64::total_cmp);
                f(&col)
            })
            .collect()
    };
    Ok(BaselineBands {
        mean: [0, 1, 2].map(|g| stat(g, &mean)),
        lower: [0, 1, 2].map(|g| stat(g, &|c| quantile_sorted(c, 0.025))),
        upper: [0, 1, 2].map(|g| stat(g, &|c| quantile_sorted(c, 0.975))),
        grids,
        succeeded: curves.len(),
        failed,
    })
}

pub fn bootstrap_baselines(data: &Dataset, settings: &FitSettings, resamples: usize, seed: u64) -> Result<BaselineBands> {
    if resamples == 0 {
        return Err(Error::InvalidConfig("at least one resample is required".into()));
    }
    let grids = baseline_grids(data);
    let results = (0..resamples)
        .map(|b| bootstrap_resample(data, settings, seed, b, &grids))
        .collect();
    baseline_bands(grids, results)
}

/// Censoring rate for a simulation design, computed once and shared by all
/// replicates.
pub fn design_censoring_rate(config: &SimConfig) -> Result<f64> {
    match config.censoring {
        Censoring::None => Ok(0.0),
        Censoring::Rate { rate } => Ok(rate),
        Censoring::Target { fraction } => calibrate_censoring_rate(config, fraction),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbsReplicate {
    pub setting: u8,
    pub replicate: usize,
    /// Score of the generating model's predictions.
    pub true_ibbs: f64,
    /// Score of the fitted parametric model's predictions.
    pub calculated_ibbs: f64,
}

/// Brier-score study horizon.
pub const BBS_HORIZON: f64 = 1.0;

/// One replicate of the Brier-score study. Both scores use the reverse
/// Kaplan-Meier censoring curve of the replicate.
pub fn bbs_replicate(setting: u8, n: usize, seed: u64, replicate: usize, rate: f64) -> Result<BbsReplicate> {
    let cfg = SimConfig::bbs_study(setting, n, derive_seed(seed, replicate as u64))?;
    let sim = simulate_with_rate(&cfg, rate)?;
    let g = CensoringCurve::reverse_km(&sim.data);
    let xs: Vec<&[f64]> = sim.data.covariates().collect();
    let truth = integrated_bbs(
        &sim.data,
        |t| Ok(xs.iter().map(|x| true_survival(&cfg, x, t, None)).collect()),
        &g,
        BBS_HORIZON,
        DEFAULT_POINTS,
    )?;
    let fit = fit_parametric(&sim.data)?;
    let fitted = FittedModel::from_parametric(&fit.model, fit.log_likelihood)?;
    let calculated = fitted.integrated_bbs(&sim.data, &g, BBS_HORIZON)?;
    Ok(BbsReplicate {
        setting,
        replicate,
        true_ibbs: truth.integrated,
        calculated_ibbs: calculated.integrated,
    })
}

/// One cell of the neural EM simulation grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralEmDesign {
    pub n: usize,
    pub theta: f64,
    pub risk: RiskKind,
    pub censoring: f64,
}

impl NeuralEmDesign {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig::neural_em_study(self.n, self.theta, self.risk, self.censoring, seed)
    }
}

/// The 36 designs: `n` in {1000, 10000}, `theta` in {0.5, 2}, three risk
/// families, censoring 0%, 25%, 50%.
pub fn neural_em_designs() -> Vec<NeuralEmDesign> {
    let mut out = Vec::with_capacity(36);
    for n in [1000, 10_000] {
        for theta in [0.5, 2.0] {
            for risk in [RiskKind::Linear, RiskKind::NonLinear, RiskKind::NonMonotonic] {
                for censoring in [0.0, 0.25, 0.5] {
                    out.push(NeuralEmDesign { n, theta, risk, censoring });
                }
            }
        }
    }
    out
}

/// Neural EM study horizon.
pub const NEURAL_EM_HORIZON: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralEmReplicate {
    pub design: NeuralEmDesign,
    pub replicate: usize,
    pub theta_parametric: f64,
    pub theta_neural: f64,
    pub ibbs_truth: f64,
    pub ibbs_parametric: f64,
    pub ibbs_neural: f64,
    pub mise_parametric: [f64; 3],
    pub mise_neural: [f64; 3],
}

/// Per-transition mean squared log-risk error of `model` against the
/// generating functions over the sample covariates.
pub fn risk_mise(model: &ModelState, truth: &SimConfig, data: &Dataset) -> Result<[f64; 3]> {
    model.risk.scores(&alloc::vec![0.0; data.p()])?;
    Ok([0, 1, 2].map(|g| {
        mise(
            |x| truth.true_risk(x)[g],
            |x| model.risk.scores(x).map_or(f64::NAN, |h| h[g]),
            data.covariates(),
        )
    }))
}

/// One replicate of the neural EM study: simulate, fit both models, score.
/// The parametric estimate of `theta` seeds the neural fit.
pub fn neural_em_replicate(
    design: &NeuralEmDesign,
    replicate: usize,
    seed: u64,
    rate: f64,
    settings: &FitSettings,
) -> Result<NeuralEmReplicate> {
    let cfg = design.sim_config(derive_seed(seed, replicate as u64));
    let sim = simulate_with_rate(&cfg, rate)?;
    let data = &sim.data;
    let g = CensoringCurve::reverse_km(data);
    let xs: Vec<&[f64]> = data.covariates().collect();
    let truth = integrated_bbs(
        data,
        |t| Ok(xs.iter().map(|x| true_survival(&cfg, x, t, None)).collect()),
        &g,
        NEURAL_EM_HORIZON,
        DEFAULT_POINTS,
    )?;

    let pfit = fit_parametric(data)?;
    let parametric = FittedModel::from_parametric(&pfit.model, pfit.log_likelihood)?;
    let mut neural_settings = settings.reseeded(seed, replicate as u64);
    neural_settings.kind = ModelKind::Neural;
    neural_settings.em.initial_theta = Some(pfit.model.theta);
    let neural = FittedModel::fit(data, &neural_settings)?;

    Ok(NeuralEmReplicate {
        design: *design,
        replicate,
        theta_parametric: parametric.theta(),
        theta_neural: neural.theta(),
        ibbs_truth: truth.integrated,
        ibbs_parametric: parametric.integrated_bbs(data, &g, NEURAL_EM_HORIZON)?.integrated,
        ibbs_neural: neural.integrated_bbs(data, &g, NEURAL_EM_HORIZON)?.integrated,
        mise_parametric: risk_mise(&parametric.state, &cfg, data)?,
        mise_neural: risk_mise(&neural.state, &cfg, data)?,
    })
}

/// Mean and sample standard deviation.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    (mean(values), sample_sd(values))
}
