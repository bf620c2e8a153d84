//! Command-line interface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use semicomp_core::harness::{neural_em_designs, FittedModel, ModelKind};
use semicomp_core::metrics::{bbs, evaluation_grid, BbsCurve, CensoringCurve, CensoringSurvival, DEFAULT_POINTS};
use semicomp_core::neural::grid_search;
use semicomp_core::risk::RiskKind;
use semicomp_core::sim::simulate;
use semicomp_core::weibull::fit_parametric;
use semicomp_core::Dataset;

use crate::config::{RunConfig, Study};
use crate::io::{self, BbsSummary, Prediction};
use crate::model_file::ModelFile;
use crate::runner::{self, risk_name, BbsTableRow, NeuralEmRawRow, NeuralEmTableRow};

#[derive(Debug, Parser)]
#[command(name = "semicomp", version, about = "Neural EM for semi-competing risks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from the illness-death model.
    Simulate(SimulateArgs),
    /// Fit a neural or parametric model.
    Fit(FitArgs),
    /// Predict joint event-free survival from a saved model.
    Predict(PredictArgs),
    /// Score predictions with the bivariate Brier score.
    Evaluate(EvaluateArgs),
    /// Cross-validated integrated Brier score.
    Cv(CvArgs),
    /// Bootstrap bands for the cumulative baseline hazards.
    Bootstrap(BootstrapArgs),
    /// Run a simulation study.
    ReplicateStudy(StudyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the latent frailties, risks, and event times.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Overrides the sample size of the configured design.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<KindArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Select the network hyperparameters by cross-validation first.
    #[arg(long)]
    pub grid_search: bool,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Saved model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated prediction times.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Without `--times`, predict on the 100-point grid ending here.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub preds: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<KindArg>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Per-fold scores and summary as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<KindArg>,
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Band CSV: `transition,t,mean,lower,upper`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub study: Option<Study>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Replicate counts of the original studies (1000 and 500).
    #[arg(long)]
    pub full_scale: bool,
    /// Restrict to sample size `n` (default 1000 for the Brier-score study).
    #[arg(long)]
    pub n: Option<usize>,
    /// Brier-score study settings to run (default all four).
    #[arg(long, value_delimiter = ',')]
    pub setting: Vec<u8>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub risk: Option<RiskArg>,
    /// Censored fraction of the neural EM design.
    #[arg(long)]
    pub censoring: Option<f64>,
    /// Summary table CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replicate CSV.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KindArg {
    Neural,
    Parametric,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Neural => ModelKind::Neural,
            KindArg::Parametric => ModelKind::Parametric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RiskArg {
    Linear,
    NonLinear,
    NonMonotonic,
}

impl From<RiskArg> for RiskKind {
    fn from(r: RiskArg) -> Self {
        match r {
            RiskArg::Linear => RiskKind::Linear,
            RiskArg::NonLinear => RiskKind::NonLinear,
            RiskArg::NonMonotonic => RiskKind::NonMonotonic,
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    set(&mut cfg.seed, common.seed);
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().with_context(|| format!("--{flag} is required"))
}

fn require_horizon(cfg: &RunConfig) -> Result<f64> {
    cfg.horizon.context("--horizon is required")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::ReplicateStudy(a) => cmd_study(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.out, a.out);
    set_opt(&mut cfg.truth, a.truth);
    cfg.validate()?;
    let mut sim = cfg.sim.clone().context("the configuration needs a \"sim\" section")?;
    set(&mut sim.n, a.n);
    set(&mut sim.seed, a.common.seed);
    sim.validate()?;
    let out = simulate(&sim)?;
    io::write_dataset(required(&cfg.out, "out")?, &out.data)?;
    if let Some(path) = &cfg.truth {
        io::write_truth(path, &out.latent)?;
    }
    log::info!(
        "simulated {} subjects, {:.1}% censored (rate {:.4})",
        out.data.len(),
        100.0 * semicomp_core::sim::censored_fraction(&out.data),
        out.censoring_rate
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.data, a.data);
    set_opt(&mut cfg.out, a.out);
    set_opt(&mut cfg.trace, a.trace);
    set(&mut cfg.model, a.model.map(Into::into));
    set(&mut cfg.folds, a.folds);
    set_opt(&mut cfg.horizon, a.horizon);
    cfg.validate()?;
    let data = io::read_dataset(required(&cfg.data, "data")?)?;
    let out = required(&cfg.out, "out")?;

    let (file, trace) = match cfg.model {
        ModelKind::Parametric => {
            let fit = fit_parametric(&data)?;
            log::info!(
                "parametric fit: log-likelihood {:.6}, theta {:.4}",
                fit.log_likelihood,
                fit.model.theta
            );
            (ModelFile::Parametric(fit.model), Vec::new())
        }
        ModelKind::Neural => {
            let mut settings = cfg.fit_settings();
            if a.grid_search {
                let horizon = require_horizon(&cfg)?;
                let search = grid_search(&data, cfg.folds, &settings, horizon, cfg.seed)?;
                log::info!("grid search selected {:?}", search.best);
                settings.train = settings.train.with_point(&search.best);
            }
            let fit = FittedModel::fit(&data, &settings)?;
            log::info!(
                "neural EM: {} iterations, converged {}, log-likelihood {:.6}, theta {:.4}",
                fit.trace.len().saturating_sub(1),
                fit.converged,
                fit.log_likelihood,
                fit.theta()
            );
            (ModelFile::from_fitted(&fit, None)?, fit.trace)
        }
    };
    io::write_json(out, &file)?;
    if let Some(path) = &cfg.trace {
        if trace.is_empty() {
            log::warn!("parametric fits have no EM trace; writing an empty trace");
        }
        io::write_trace(path, &trace)?;
    }
    Ok(())
}

/// Joint event-free survival of every subject at every time.
pub fn predict(model: &ModelFile, data: &Dataset, times: &[f64]) -> Result<Vec<Prediction>> {
    let state = model.to_state()?;
    let fitted = FittedModel {
        kind: ModelKind::Neural,
        state,
        log_likelihood: f64::NAN,
        trace: Vec::new(),
        converged: true,
    };
    let mut predictor = fitted.predictor(data)?;
    let mut out = Vec::with_capacity(times.len() * data.len());
    for &t in times {
        ensure!(t >= 0.0 && t.is_finite(), "prediction times must be non-negative");
        for (subject, pi) in predictor(t)?.into_iter().enumerate() {
            out.push(Prediction { subject, t, pi });
        }
    }
    Ok(out)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.model_path, a.model);
    set_opt(&mut cfg.data, a.data);
    set_opt(&mut cfg.out, a.out);
    set_opt(&mut cfg.horizon, a.horizon);
    cfg.validate()?;
    let model: ModelFile = io::read_json(required(&cfg.model_path, "model")?)?;
    let data = io::read_dataset(required(&cfg.data, "data")?)?;
    let times = if a.times.is_empty() {
        evaluation_grid(require_horizon(&cfg)?, DEFAULT_POINTS)
    } else {
        a.times
    };
    let preds = predict(&model, &data, &times)?;
    io::write_predictions(required(&cfg.out, "out")?, &preds)
}

/// Brier score at every prediction time up to `horizon`, with the reverse
/// Kaplan-Meier censoring curve of `data`. Times where the censoring
/// survival has reached zero are dropped.
pub fn evaluate(data: &Dataset, preds: &[Prediction], horizon: f64) -> Result<BbsCurve> {
    ensure!(horizon > 0.0 && horizon.is_finite(), "horizon must be positive");
    let mut by_time: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for p in preds {
        ensure!(p.subject < data.len(), "prediction for unknown subject {}", p.subject);
        ensure!(p.t >= 0.0 && p.t.is_finite(), "prediction times must be non-negative");
        let slot = by_time.entry(p.t.to_bits()).or_insert_with(|| vec![None; data.len()]);
        ensure!(slot[p.subject].is_none(), "duplicate prediction for subject {} at t={}", p.subject, p.t);
        slot[p.subject] = Some(p.pi);
    }
    let g = CensoringCurve::reverse_km(data);
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (bits, pis) in by_time {
        let t = f64::from_bits(bits);
        if t > horizon || !(g.at(t) > 0.0) {
            continue;
        }
        let pis = pis
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.with_context(|| format!("subject {i} has no prediction at t={t}")))
            .collect::<Result<Vec<_>>>()?;
        grid.push(t);
        values.push(bbs(data, &pis, &g, t)?);
    }
    if grid.is_empty() {
        bail!("no prediction time lies in (0, horizon] with positive censoring survival");
    }
    Ok(BbsCurve::from_values(grid, values, horizon))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.data, a.data);
    set_opt(&mut cfg.preds, a.preds);
    set_opt(&mut cfg.out, a.out);
    set_opt(&mut cfg.summary, a.summary);
    set_opt(&mut cfg.horizon, a.horizon);
    cfg.validate()?;
    let data = io::read_dataset(required(&cfg.data, "data")?)?;
    let preds = io::read_predictions(required(&cfg.preds, "preds")?)?;
    let curve = evaluate(&data, &preds, require_horizon(&cfg)?)?;
    let summary = BbsSummary {
        ibbs: curve.integrated,
        horizon: curve.horizon,
        n_points: curve.grid.len(),
    };
    if let Some(out) = &cfg.out {
        io::write_bbs_curve(out, &curve)?;
    }
    match &cfg.summary {
        Some(path) => io::write_json(path, &summary)?,
        None => println!("{}", serde_json::to_string(&summary)?),
    }
    Ok(())
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.data, a.data);
    set_opt(&mut cfg.out, a.out);
    set(&mut cfg.model, a.model.map(Into::into));
    set(&mut cfg.folds, a.folds);
    set_opt(&mut cfg.horizon, a.horizon);
    cfg.validate()?;
    let data = io::read_dataset(required(&cfg.data, "data")?)?;
    let summary = runner::cross_validate(&data, &cfg.fit_settings(), cfg.folds, require_horizon(&cfg)?, cfg.seed)?;
    for (k, v) in summary.per_fold.iter().enumerate() {
        println!("fold {}: iBBS {v:.6}", k + 1);
    }
    println!("mean iBBS {:.6} (SD {:.6})", summary.mean, summary.sd);
    if let Some(out) = &cfg.out {
        io::write_json(out, &summary)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandRow {
    pub transition: usize,
    pub t: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

fn cmd_bootstrap(a: BootstrapArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.data, a.data);
    set_opt(&mut cfg.out, a.out);
    set(&mut cfg.model, a.model.map(Into::into));
    set(&mut cfg.bootstrap_resamples, a.resamples);
    cfg.validate()?;
    let data = io::read_dataset(required(&cfg.data, "data")?)?;
    let bands = runner::bootstrap_baselines(&data, &cfg.fit_settings(), cfg.bootstrap_resamples, cfg.seed)?;
    log::info!("{} refits succeeded, {} failed", bands.succeeded, bands.failed);
    let rows = (0..3).flat_map(|g| {
        let b = &bands;
        (0..b.grids[g].len()).map(move |k| BandRow {
            transition: g + 1,
            t: b.grids[g][k],
            mean: b.mean[g][k],
            lower: b.lower[g][k],
            upper: b.upper[g][k],
        })
    });
    match &cfg.out {
        Some(out) => io::write_rows(out, rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_opt(&mut cfg.study, a.study);
    set_opt(&mut cfg.replicates, a.replicates);
    set_opt(&mut cfg.out, a.out.clone());
    cfg.full_scale |= a.full_scale;
    cfg.validate()?;
    let study = cfg.study.context("--study is required")?;
    match study {
        Study::BbsValidation => {
            let replicates = cfg.replicates.unwrap_or(if cfg.full_scale { 1000 } else { 100 });
            let n = a.n.unwrap_or(1000);
            let settings = if a.setting.is_empty() { vec![1, 2, 3, 4] } else { a.setting.clone() };
            let mut table = Vec::new();
            let mut raw = Vec::new();
            for s in settings {
                let reps = runner::bbs_study(s, n, replicates, cfg.seed)?;
                table.push(BbsTableRow::new(s, n, &reps));
                raw.extend(reps);
            }
            emit_table(cfg.out.as_deref(), &table)?;
            if let Some(path) = &a.raw {
                io::write_rows(path, raw)?;
            }
        }
        Study::NeuralEmValidation => {
            let replicates = cfg.replicates.unwrap_or(if cfg.full_scale { 500 } else { 100 });
            let risk = a.risk.map(RiskKind::from);
            let designs: Vec<_> = neural_em_designs()
                .into_iter()
                .filter(|d| a.n.is_none_or(|n| d.n == n))
                .filter(|d| a.theta.is_none_or(|t| d.theta == t))
                .filter(|d| risk.is_none_or(|r| d.risk == r))
                .filter(|d| a.censoring.is_none_or(|c| d.censoring == c))
                .collect();
            ensure!(!designs.is_empty(), "no design matches the filters");
            let mut settings = cfg.fit_settings();
            settings.kind = ModelKind::Neural;
            let mut table = Vec::new();
            let mut raw = Vec::new();
            for d in &designs {
                log::info!(
                    "design n={} theta={} risk={} censoring={}",
                    d.n,
                    d.theta,
                    risk_name(d.risk),
                    d.censoring
                );
                let reps = runner::neural_em_study(d, replicates, cfg.seed, &settings)?;
                table.push(NeuralEmTableRow::new(d, &reps));
                raw.extend(reps.iter().map(NeuralEmRawRow::from));
            }
            emit_table(cfg.out.as_deref(), &table)?;
            if let Some(path) = &a.raw {
                io::write_rows(path, raw)?;
            }
        }
    }
    Ok(())
}

fn emit_table<T: serde::Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    match out {
        Some(path) => io::write_rows(path, rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}
