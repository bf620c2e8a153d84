//! Expectation-maximization: Q function, closed-form baseline updates, and
//! the E/M/N iteration.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hazard::{Baseline, StepHazard};
use crate::likelihood::{exposures, observed_log_likelihood_scored, ModelState};
use crate::math::{abs, brent_maximize, cholesky_solve, digamma, exp, ln, ln_gamma};
use crate::neural::{NeuralTrainer, TrainConfig};
use crate::posterior::{posterior_scored, FrailtyPosterior};
use crate::risk::{LinearRisk, NeuralRisk, RiskModel};
use crate::{weibull, Dataset, Error, Result};

/// Search range for the frailty variance in the closed-form updates.
pub const THETA_RANGE: (f64, f64) = (1e-4, 100.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Relative change in the observed-data log-likelihood that stops the loop.
    pub tolerance: f64,
    pub n_step_epochs_per_iteration: usize,
    pub seed: u64,
    /// Skips the parametric fit that otherwise seeds `theta`.
    #[serde(default)]
    pub initial_theta: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            n_step_epochs_per_iteration: 10,
            seed: 0,
            initial_theta: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if let Some(t) = self.initial_theta {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig("initial_theta must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QValue {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub total: f64,
}

impl QValue {
    fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self {
            q1,
            q2,
            q3,
            q4,
            total: q1 + q2 + q3 + q4,
        }
    }
}

/// Everything the M- and N-steps hold fixed within one iteration: posterior
/// moments, unweighted exposures, and the log jump sizes at observed events.
#[derive(Clone, Debug)]
pub(crate) struct Frozen {
    pub exposure: Vec<[f64; 3]>,
    pub events: Vec<[bool; 3]>,
    pub mean: Vec<f64>,
    pub log_mean: Vec<f64>,
    /// `sum_i event_gi (log dLambda_g + E[log gamma_i])` per transition.
    pub event_constant: [f64; 3],
    pub sum_mean: f64,
    pub sum_log_mean: f64,
}

impl Frozen {
    pub fn new(data: &Dataset, posteriors: &[FrailtyPosterior], baselines: &[Baseline; 3]) -> Result<Self> {
        if posteriors.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: posteriors.len(),
            });
        }
        let n = data.len();
        let mut out = Self {
            exposure: Vec::with_capacity(n),
            events: Vec::with_capacity(n),
            mean: Vec::with_capacity(n),
            log_mean: Vec::with_capacity(n),
            event_constant: [0.0; 3],
            sum_mean: 0.0,
            sum_log_mean: 0.0,
        };
        for (i, (r, post)) in data.iter().zip(posteriors).enumerate() {
            let events = r.transition_events();
            let times = [r.y1, r.y2, r.sojourn()];
            for g in 0..3 {
                if events[g] {
                    let rate = baselines[g].event_rate(times[g]);
                    if !(rate > 0.0) || !rate.is_finite() {
                        return Err(Error::NonFiniteQ {
                            subject: i,
                            transition: g + 1,
                        });
                    }
                    out.event_constant[g] += ln(rate) + post.log_mean;
                }
            }
            out.exposure.push(exposures(r, baselines));
            out.events.push(events);
            out.mean.push(post.mean);
            out.log_mean.push(post.log_mean);
            out.sum_mean += post.mean;
            out.sum_log_mean += post.log_mean;
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    /// Subject `i`'s share of `Q_g` that depends on `h`:
    /// `event_gi h - E[gamma_i] Lambda_gi e^h`.
    #[inline]
    pub fn q_h(&self, i: usize, g: usize, h: f64) -> f64 {
        let ev = if self.events[i][g] { h } else { 0.0 };
        ev - self.mean[i] * self.exposure[i][g] * exp(h)
    }

    /// `dQ / dh_gi`.
    #[inline]
    pub fn dq_dh(&self, i: usize, g: usize, h: f64) -> f64 {
        let ev = if self.events[i][g] { 1.0 } else { 0.0 };
        ev - self.mean[i] * self.exposure[i][g] * exp(h)
    }

    pub fn q4(&self, theta: f64) -> f64 {
        let r = 1.0 / theta;
        let n = self.len() as f64;
        n * (r * ln(r) - ln_gamma(r)) + (r - 1.0) * self.sum_log_mean - r * self.sum_mean
    }

    /// `dQ4 / d(1/theta)`.
    pub fn dq4_dr(&self, r: f64) -> Result<f64> {
        let n = self.len() as f64;
        Ok(n * (ln(r) + 1.0 - digamma(r)?) + self.sum_log_mean - self.sum_mean)
    }

    pub fn q(&self, scores: &[[f64; 3]], theta: f64) -> QValue {
        let mut q = self.event_constant;
        for (i, h) in scores.iter().enumerate() {
            for g in 0..3 {
                q[g] += self.q_h(i, g, h[g]);
            }
        }
        QValue::new(q[0], q[1], q[2], self.q4(theta))
    }
}

/// Expected complete-data log-likelihood at `state` under frozen posterior
/// moments.
pub fn q_function(data: &Dataset, posteriors: &[FrailtyPosterior], state: &ModelState) -> Result<QValue> {
    let scores = state.scores(data)?;
    Ok(Frozen::new(data, posteriors, &state.baselines)?.q(&scores, state.theta))
}

/// One entry of a transition's at-risk population.
struct AtRisk {
    time: f64,
    weight: f64,
    event: bool,
}

/// `dLambda(t) = d(t) / sum_{time_i >= t} weight_i` at every event time.
fn breslow(mut entries: Vec<AtRisk>, transition: usize) -> Result<StepHazard> {
    entries.sort_by(|a, b| b.time.total_cmp(&a.time));
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    let mut at_risk = 0.0;
    let mut k = 0;
    while k < entries.len() {
        let t = entries[k].time;
        let mut events = 0.0;
        while k < entries.len() && entries[k].time == t {
            at_risk += entries[k].weight;
            if entries[k].event {
                events += 1.0;
            }
            k += 1;
        }
        if events > 0.0 {
            if !(at_risk > 0.0) || !at_risk.is_finite() {
                return Err(Error::EmptyRiskSet { transition, time: t });
            }
            times.push(t);
            sizes.push(events / at_risk);
        }
    }
    times.reverse();
    sizes.reverse();
    if sizes.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::NonFiniteQ {
            subject: 0,
            transition,
        });
    }
    Ok(StepHazard::from_parts(times, sizes))
}

/// Risk-set populations of the three transitions. Transitions 1 and 2 share
/// the event-free risk set `Y1 >= t`; transition 3 runs on the sojourn scale
/// among subjects with a non-terminal event.
fn at_risk_sets(data: &Dataset, weight: impl Fn(usize, usize) -> f64) -> [Vec<AtRisk>; 3] {
    let mut sets: [Vec<AtRisk>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, r) in data.iter().enumerate() {
        let ev = r.transition_events();
        sets[0].push(AtRisk {
            time: r.y1,
            weight: weight(i, 0),
            event: ev[0],
        });
        sets[1].push(AtRisk {
            time: r.y1,
            weight: weight(i, 1),
            event: ev[1],
        });
        if r.delta1 {
            sets[2].push(AtRisk {
                time: r.sojourn(),
                weight: weight(i, 2),
                event: ev[2],
            });
        }
    }
    sets
}

fn baselines_from(sets: [Vec<AtRisk>; 3]) -> Result<[StepHazard; 3]> {
    let [a, b, c] = sets;
    Ok([breslow(a, 1)?, breslow(b, 2)?, breslow(c, 3)?])
}

/// Closed-form baseline update given posterior means and log-risk scores.
pub fn m_step(data: &Dataset, posteriors: &[FrailtyPosterior], scores: &[[f64; 3]]) -> Result<[StepHazard; 3]> {
    if posteriors.len() != data.len() || scores.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: posteriors.len().min(scores.len()),
        });
    }
    baselines_from(at_risk_sets(data, |i, g| posteriors[i].mean * exp(scores[i][g])))
}

/// Unadjusted Nelson-Aalen estimates: the M-step with unit frailties and
/// zero log-risk.
pub fn nelson_aalen_seed(data: &Dataset) -> [StepHazard; 3] {
    // unit weights keep every risk set positive
    baselines_from(at_risk_sets(data, |_, _| 1.0)).unwrap_or_default()
}

/// How the log-risk functions and `theta` are updated after each M-step.
#[derive(Clone, Debug, PartialEq)]
pub enum RiskSpec {
    /// Risk held fixed; `theta` optionally re-maximized.
    Fixed { risk: RiskModel, update_theta: bool },
    /// `h_g(x) = x' beta_g` by Newton ascent on `Q_g`.
    Linear,
    /// Three networks and `log theta` trained by gradient descent on `-Q/n`.
    Neural(TrainConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub obs_loglik: f64,
    pub theta: f64,
    pub q: QValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmFit {
    pub state: ModelState,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
    /// Frailty variance the iteration started from.
    pub initial_theta: f64,
}

impl EmFit {
    pub fn log_likelihood(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.obs_loglik)
    }
}

/// Maximizes `Q4` over `log theta` within [`THETA_RANGE`].
pub(crate) fn update_theta(frozen: &Frozen) -> f64 {
    let (lo, hi) = (ln(THETA_RANGE.0), ln(THETA_RANGE.1));
    let (w, _) = brent_maximize(|w| frozen.q4(exp(w)), lo, hi, 1e-10);
    exp(w)
}

/// Newton ascent on `Q_g(beta)` with step halving.
fn update_linear(data: &Dataset, frozen: &Frozen, betas: &mut LinearRisk) {
    let p = data.p();
    if p == 0 {
        return;
    }
    let xs: Vec<&[f64]> = data.covariates().collect();
    for g in 0..3 {
        let q_at = |beta: &[f64]| -> f64 {
            xs.iter()
                .enumerate()
                .map(|(i, x)| frozen.q_h(i, g, dot(x, beta)))
                .sum()
        };
        let beta = &mut betas.betas[g];
        let mut current = q_at(beta);
        for _ in 0..50 {
            let mut grad = vec![0.0; p];
            let mut hess = vec![0.0; p * p];
            for (i, x) in xs.iter().enumerate() {
                let h = dot(x, beta);
                let mu = frozen.mean[i] * frozen.exposure[i][g] * exp(h);
                let resid = frozen.dq_dh(i, g, h);
                for a in 0..p {
                    grad[a] += resid * x[a];
                    for b in 0..p {
                        hess[a * p + b] += mu * x[a] * x[b];
                    }
                }
            }
            let Some(step) = cholesky_solve(&hess, &grad) else {
                break;
            };
            let mut scale = 1.0;
            let mut accepted = false;
            while scale > 1e-8 {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                let q = q_at(&trial);
                if q.is_finite() && q >= current {
                    *beta = trial;
                    current = q;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            let size = step.iter().map(|s| abs(scale * s)).fold(0.0, f64::max);
            if !accepted || size < 1e-10 {
                break;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn step_baselines(h: [StepHazard; 3]) -> [Baseline; 3] {
    h.map(Baseline::Step)
}

/// Runs E/M/N iterations from Nelson-Aalen baselines.
///
/// `theta` starts at `config.initial_theta` or, when absent, at the frailty
/// variance of the Weibull/linear maximum-likelihood fit. Row 0 of the trace
/// is the starting point.
pub fn run_em(data: &Dataset, spec: &RiskSpec, config: &EmConfig) -> Result<EmFit> {
    config.validate()?;
    let initial_theta = match config.initial_theta {
        Some(t) => t,
        None => weibull::fit_parametric(data)?.model.theta,
    }
    .clamp(THETA_RANGE.0, THETA_RANGE.1);

    let mut trainer = None;
    let risk = match spec {
        RiskSpec::Fixed { risk, .. } => risk.clone(),
        RiskSpec::Linear => RiskModel::Linear(LinearRisk::zeros(data.p())),
        RiskSpec::Neural(tc) => {
            tc.validate()?;
            let mut rng = crate::rng::stream(config.seed, 0);
            let nets = [0, 1, 2].map(|_| crate::neural::RiskNetwork::init(data.p(), &tc.hidden, &mut rng));
            let mut tc = tc.clone();
            tc.epochs = config.n_step_epochs_per_iteration;
            trainer = Some(NeuralTrainer::new(&nets, tc, crate::rng::derive_seed(config.seed, 1)));
            RiskModel::Neural(NeuralRisk { networks: nets })
        }
    };
    let mut state = ModelState::new(step_baselines(nelson_aalen_seed(data)), initial_theta, risk)?;
    let mut xi = ln(initial_theta);

    let mut scores = state.scores(data)?;
    let mut ll = observed_log_likelihood_scored(data, &state.baselines, state.theta, &scores)?;
    let mut posts: Vec<FrailtyPosterior> = e_step(data, &state, &scores);
    let q0 = Frozen::new(data, &posts, &state.baselines)?.q(&scores, state.theta);
    let mut trace = vec![TraceRow {
        iter: 0,
        obs_loglik: ll,
        theta: state.theta,
        q: q0,
    }];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations {
        iterations = iter;
        // M
        state.baselines = step_baselines(m_step(data, &posts, &scores)?);
        let frozen = Frozen::new(data, &posts, &state.baselines)?;
        // N
        match (spec, &mut state.risk) {
            (RiskSpec::Fixed { update_theta: true, .. }, _) => state.theta = update_theta(&frozen),
            (RiskSpec::Fixed { .. }, _) => {}
            (RiskSpec::Linear, RiskModel::Linear(betas)) => {
                update_linear(data, &frozen, betas);
                state.theta = update_theta(&frozen);
            }
            (RiskSpec::Neural(_), RiskModel::Neural(nets)) => {
                let trainer = trainer.as_mut().ok_or(Error::Domain("neural trainer missing"))?;
                let outcome = trainer.train(data, &frozen, nets, &mut xi)?;
                if outcome.diverged {
                    log::warn!("N-step loss became non-finite at iteration {iter}; kept last finite parameters");
                }
                state.theta = exp(xi);
            }
            _ => return Err(Error::Domain("risk model does not match the requested kind")),
        }
        scores = state.scores(data)?;
        let q = frozen.q(&scores, state.theta);
        let next = observed_log_likelihood_scored(data, &state.baselines, state.theta, &scores)?;
        trace.push(TraceRow {
            iter,
            obs_loglik: next,
            theta: state.theta,
            q,
        });
        let rel = abs(next - ll) / abs(ll).max(f64::MIN_POSITIVE);
        ll = next;
        if rel < config.tolerance {
            converged = true;
            break;
        }
        // E
        posts = e_step(data, &state, &scores);
    }
    if !converged {
        log::warn!("EM stopped at the iteration limit ({}) before converging", config.max_iterations);
    }
    Ok(EmFit {
        state,
        trace,
        converged,
        iterations,
        initial_theta,
    })
}

fn e_step(data: &Dataset, state: &ModelState, scores: &[[f64; 3]]) -> Vec<FrailtyPosterior> {
    data.iter()
        .zip(scores)
        .map(|(r, h)| posterior_scored(r, &state.baselines, state.theta, h))
        .collect()
}
