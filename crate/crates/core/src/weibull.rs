//! Parametric comparator: Weibull baselines, linear log-risk, gamma frailty,
//! fitted by direct maximization of the observed-data likelihood.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::hazard::{Baseline, WeibullHazard};
use crate::likelihood::{marginal_survival, ModelState};
use crate::math::{exp, ln, ln_1p, powf};
use crate::optim::{bfgs_minimize, BfgsConfig};
use crate::risk::{LinearRisk, RiskModel};
use crate::rng::stream;
use crate::{Dataset, Error, Result};

/// Gradient tolerance (infinity norm) at the optimum.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
const RESTARTS: u64 = 3;
const RESTART_SEED: u64 = 0x3EB1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    /// `[phi1, phi2]` per transition: cumulative hazard `phi1 t^phi2`.
    pub phi: [[f64; 2]; 3],
    pub beta: [Vec<f64>; 3],
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricFit {
    pub model: ParametricModel,
    pub log_likelihood: f64,
    /// Infinity norm of the log-likelihood gradient in the optimizer's
    /// coordinates `(log phi1, log phi2, beta, log theta)`.
    pub gradient_norm: f64,
    pub iterations: usize,
}

impl ParametricModel {
    pub fn validate(&self) -> Result<()> {
        if self.phi.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain("Weibull parameters must be positive"));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::Domain("theta must be positive"));
        }
        let p = self.beta[0].len();
        if self.beta.iter().any(|b| b.len() != p) {
            return Err(Error::Domain("coefficient vectors differ in length"));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.beta[0].len()
    }

    pub fn weibull(&self, g: usize) -> WeibullHazard {
        WeibullHazard {
            phi1: self.phi[g][0],
            phi2: self.phi[g][1],
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        LinearRisk {
            betas: self.beta.clone(),
        }
        .scores(x)
    }

    /// The same model as a general [`ModelState`].
    pub fn to_state(&self) -> Result<ModelState> {
        ModelState::new(
            [0, 1, 2].map(|g| Baseline::Weibull(self.weibull(g))),
            self.theta,
            RiskModel::Linear(LinearRisk {
                betas: self.beta.clone(),
            }),
        )
    }

    fn to_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * (2 + self.p()) + 1);
        for g in 0..3 {
            v.push(ln(self.phi[g][0]));
            v.push(ln(self.phi[g][1]));
            v.extend_from_slice(&self.beta[g]);
        }
        v.push(ln(self.theta));
        v
    }

    fn from_params(v: &[f64], p: usize) -> Self {
        let block = 2 + p;
        let phi = [0, 1, 2].map(|g| [exp(v[g * block]), exp(v[g * block + 1])]);
        let beta = [0, 1, 2].map(|g| v[g * block + 2..(g + 1) * block].to_vec());
        Self {
            phi,
            beta,
            theta: exp(v[3 * block]),
        }
    }
}

/// `(1 + theta [phi11 t^phi12 e^(x'b1) + phi21 t^phi22 e^(x'b2)])^(-1/theta)`.
pub fn predict_parametric(model: &ParametricModel, x: &[f64], t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(1.0);
    }
    let h = model.scores(x)?;
    let a = model.weibull(0).cumulative(t) * exp(h[0]) + model.weibull(1).cumulative(t) * exp(h[1]);
    Ok(marginal_survival(a, model.theta))
}

/// Observed-data log-likelihood and its gradient in the coordinates
/// `(log phi1g, log phi2g, beta_g)` for `g = 1, 2, 3`, then `log theta`.
pub fn log_likelihood_and_gradient(data: &Dataset, params: &[f64], grad: &mut [f64]) -> f64 {
    let p = data.p();
    let block = 2 + p;
    let m = ParametricModel::from_params(params, p);
    let r = 1.0 / m.theta;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    let mut dr_total = 0.0;
    for rec in data.iter() {
        let x = &rec.covariates;
        let events = rec.transition_events();
        let times = [rec.y1, rec.y1, rec.sojourn()];
        let event_times = [rec.y1, rec.y2, rec.sojourn()];
        let mut c = [0.0; 3];
        let mut h = [0.0; 3];
        for g in 0..3 {
            h[g] = m.beta[g].iter().zip(x).map(|(b, x)| b * x).sum();
            if g < 2 || rec.delta1 {
                c[g] = m.phi[g][0] * powf(times[g], m.phi[g][1]) * exp(h[g]);
            }
        }
        let a = c[0] + c[1] + c[2];
        let d = rec.event_count();
        // lnGamma(r + d) - lnGamma(r) + r ln r - (r + d) ln(r + A), with d in {0, 1, 2}
        let mut ll = -r * ln_1p(a / r);
        let mut dr = -ln_1p(a / r) + a / (r + a);
        for k in 0..(d as usize) {
            let rk = r + k as f64;
            ll += ln(rk / (r + a));
            dr += 1.0 / rk - 1.0 / (r + a);
        }
        let da = -(r + d) / (r + a);
        for g in 0..3 {
            let base = g * block;
            let (phi1, phi2) = (m.phi[g][0], m.phi[g][1]);
            if c[g] > 0.0 {
                let lt = ln(times[g]);
                grad[base] += da * c[g];
                grad[base + 1] += da * c[g] * phi2 * lt;
                for j in 0..p {
                    grad[base + 2 + j] += da * c[g] * x[j];
                }
            }
            if events[g] {
                let lt = ln(event_times[g]);
                ll += ln(phi1) + ln(phi2) + (phi2 - 1.0) * lt + h[g];
                grad[base] += 1.0;
                grad[base + 1] += 1.0 + phi2 * lt;
                for j in 0..p {
                    grad[base + 2 + j] += x[j];
                }
            }
        }
        total += ll;
        dr_total += dr;
    }
    grad[3 * block] = -r * dr_total;
    total
}

fn exponential_start(data: &Dataset) -> ParametricModel {
    let mut events = [0.0f64; 3];
    let mut exposure = [0.0; 3];
    for r in data.iter() {
        let ev = r.transition_events();
        exposure[0] += r.y1;
        exposure[1] += r.y1;
        if r.delta1 {
            exposure[2] += r.sojourn();
        }
        for g in 0..3 {
            if ev[g] {
                events[g] += 1.0;
            }
        }
    }
    let phi = [0, 1, 2].map(|g| {
        let rate = if exposure[g] > 0.0 {
            events[g].max(0.5) / exposure[g]
        } else {
            1.0
        };
        [rate, 1.0]
    });
    ParametricModel {
        phi,
        beta: [vec![0.0; data.p()], vec![0.0; data.p()], vec![0.0; data.p()]],
        theta: 1.0,
    }
}

/// Maximum-likelihood fit from exponential starting values (`beta = 0`,
/// `theta = 1`) and jittered restarts; the best optimum is kept.
pub fn fit_parametric(data: &Dataset) -> Result<ParametricFit> {
    let p = data.p();
    let start = exponential_start(data).to_params();
    let config = BfgsConfig {
        max_iterations: 2000,
        gradient_tolerance: GRADIENT_TOLERANCE,
    };
    let mut best: Option<ParametricFit> = None;
    let mut last_err = None;
    for k in 0..RESTARTS {
        let mut x0 = start.clone();
        if k > 0 {
            let mut rng = stream(RESTART_SEED, k);
            x0.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
        let mut objective = |x: &[f64], g: &mut [f64]| {
            let ll = log_likelihood_and_gradient(data, x, g);
            g.iter_mut().for_each(|v| *v = -*v);
            -ll
        };
        match bfgs_minimize(&mut objective, &x0, &config) {
            Ok(res) => {
                let fit = ParametricFit {
                    model: ParametricModel::from_params(&res.x, p),
                    log_likelihood: -res.value,
                    gradient_norm: res.gradient_norm(),
                    iterations: res.iterations,
                };
                if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Domain("no restarts attempted")),
    }
}
