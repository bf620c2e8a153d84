//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Each check returns `Ok(detail)` on success and
//! `Err(detail)` on failure.
#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use semicomp_core::em::{m_step, run_em, EmConfig, RiskSpec};
use semicomp_core::hazard::{Baseline, StepHazard, WeibullHazard};
use semicomp_core::likelihood::{complete_data_log_likelihood, observed_log_likelihood, ModelState};
use semicomp_core::metrics::{bbs, KnownCensoring};
use semicomp_core::neural::{loss, loss_gradient, RiskNetwork};
use semicomp_core::posterior::posteriors;
use semicomp_core::risk::{LinearRisk, NeuralRisk, RiskKind, RiskModel};
use semicomp_core::rng::{stream, Rng};
use semicomp_core::sim::{simulate, Censoring, CovariateDist, SimConfig};
use semicomp_core::{Dataset, ObservedRecord};

pub type Check = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Weibull baselines with parameters drawn around the simulation designs.
pub fn random_weibull(rng: &mut Rng) -> [WeibullHazard; 3] {
    [0, 1, 2].map(|_| WeibullHazard {
        phi1: rng.random_range(0.3..2.5),
        phi2: rng.random_range(0.7..2.5),
    })
}

pub fn random_linear(rng: &mut Rng, p: usize) -> LinearRisk {
    LinearRisk {
        betas: [0, 1, 2].map(|_| (0..p).map(|_| rng.random_range(-0.8..0.8)).collect()),
    }
}

/// Records drawn directly in the four observable cases, independent of the
/// simulator.
pub fn random_records(rng: &mut Rng, n: usize, p: usize) -> Dataset {
    let records = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            let y1 = rng.random_range(0.05..2.0);
            match rng.random_range(0..4) {
                0 => ObservedRecord::new(y1, true, y1 + rng.random_range(0.01..1.5), true, x),
                1 => ObservedRecord::new(y1, false, y1, true, x),
                2 => ObservedRecord::new(y1, true, y1 + rng.random_range(0.01..1.5), false, x),
                _ => ObservedRecord::new(y1, false, y1, false, x),
            }
        })
        .collect();
    Dataset::new(records).expect("generated records are valid")
}

fn log_gamma_density(gamma: f64, theta: f64) -> f64 {
    let r = 1.0 / theta;
    r * r.ln() - libm::lgamma(r) + (r - 1.0) * gamma.ln() - r * gamma
}

/// Straight from the four-case table: conditional survivals and hazards with
/// Weibull baselines and a linear log-risk.
pub fn case_table_log_likelihood(r: &ObservedRecord, gamma: f64, w: &[WeibullHazard; 3], risk: &LinearRisk, theta: f64) -> f64 {
    let h = linear_scores(risk, &r.covariates);
    let cum = |g: usize, t: f64| w[g].phi1 * t.powf(w[g].phi2);
    let haz = |g: usize, t: f64| w[g].phi1 * w[g].phi2 * t.powf(w[g].phi2 - 1.0);
    let s11 = -gamma * (cum(0, r.y1) * h[0].exp() + cum(1, r.y1) * h[1].exp());
    let lam = |g: usize, t: f64| (gamma * haz(g, t) * h[g].exp()).ln();
    let s21 = -gamma * cum(2, r.y2 - r.y1) * h[2].exp();
    let body = match (r.delta1, r.delta2) {
        (true, true) => s11 + lam(0, r.y1) + s21 + lam(2, r.y2 - r.y1),
        (false, true) => s11 + lam(1, r.y2),
        (true, false) => s11 + lam(0, r.y1) + s21,
        (false, false) => s11,
    };
    body + log_gamma_density(gamma, theta)
}

fn weibull_state(w: [WeibullHazard; 3], theta: f64, risk: LinearRisk) -> ModelState {
    ModelState::new(w.map(Baseline::Weibull), theta, RiskModel::Linear(risk)).unwrap()
}

/// Complete-data log-likelihood against the case table on `n` subjects.
pub fn complete_vs_case(n: usize, seed: u64) -> Check {
    let mut rng = stream(seed, 0);
    let data = random_records(&mut rng, n, 2);
    let w = random_weibull(&mut rng);
    let risk = random_linear(&mut rng, 2);
    let theta = rng.random_range(0.1..2.5);
    let gammas: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..4.0)).collect();
    let state = weibull_state(w, theta, risk.clone());
    let lib = complete_data_log_likelihood(&data, &gammas, &state).map_err(|e| e.to_string())?;
    let oracle: f64 = data
        .iter()
        .zip(&gammas)
        .map(|(r, &g)| case_table_log_likelihood(r, g, &w, &risk, theta))
        .sum();
    let rel = (lib - oracle).abs() / oracle.abs().max(1.0);
    verdict(rel < 1e-10, format!("n={n}, relative difference {rel:.2e} (tolerance 1e-10)"))
}

fn linear_scores(risk: &LinearRisk, x: &[f64]) -> [f64; 3] {
    [0, 1, 2].map(|g| risk.betas[g].iter().zip(x).map(|(b, x)| b * x).sum())
}

fn exposure(r: &ObservedRecord, w: &[WeibullHazard; 3], h: &[f64; 3]) -> f64 {
    let cum = |g: usize, t: f64| w[g].phi1 * t.powf(w[g].phi2);
    cum(0, r.y1) * h[0].exp() + cum(1, r.y1) * h[1].exp() + if r.delta1 { cum(2, r.y2 - r.y1) * h[2].exp() } else { 0.0 }
}

/// `log int exp(l(gamma)) dgamma` by the trapezoid rule in `u = log gamma`.
/// The integrand peaks at `u* = log(k / (1/theta + A))` and decays like
/// `exp(k (u - u*))` on the left and doubly exponentially on the right.
pub fn quadrature_log_marginal(r: &ObservedRecord, w: &[WeibullHazard; 3], risk: &LinearRisk, theta: f64) -> f64 {
    let k = 1.0 / theta + f64::from(u8::from(r.delta1) + u8::from(r.delta2));
    let rate = 1.0 / theta + exposure(r, w, &linear_scores(risk, &r.covariates));
    let peak_u = (k / rate).ln();
    let (lo, hi) = (peak_u - 50.0 / k - 5.0, peak_u + 5.0);
    let f = |u: f64| case_table_log_likelihood(r, u.exp(), w, risk, theta) + u;
    let m = 400_000;
    let step = (hi - lo) / m as f64;
    let vals: Vec<f64> = (0..=m).map(|j| f(lo + step * j as f64)).collect();
    let peak = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (j, v) in vals.iter().enumerate() {
        let wgt = if j == 0 || j == m { 0.5 } else { 1.0 };
        sum += wgt * (v - peak).exp();
    }
    peak + (sum * step).ln()
}

/// Closed-form observed log-likelihood against numerical integration over
/// the frailty, subject by subject.
pub fn observed_vs_quadrature(subjects: usize, seed: u64) -> Check {
    let mut rng = stream(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..subjects {
        let data = random_records(&mut rng, 1, 2);
        let w = random_weibull(&mut rng);
        let risk = random_linear(&mut rng, 2);
        let theta = rng.random_range(0.2..2.0);
        let lib = observed_log_likelihood(&data, &weibull_state(w, theta, risk.clone())).map_err(|e| e.to_string())?;
        let quad = quadrature_log_marginal(&data.records()[0], &w, &risk, theta);
        worst = worst.max((lib - quad).abs() / quad.abs().max(1.0));
    }
    verdict(worst < 1e-8, format!("{subjects} subjects, worst relative difference {worst:.2e} (tolerance 1e-8)"))
}

/// Exact posterior draws by rejection from the prior: accept with
/// probability `L(gamma) / L(d / A)` where `L = gamma^d exp(-gamma A)`.
pub fn posterior_draws(events: f64, exposure: f64, theta: f64, m: usize, rng: &mut Rng) -> Vec<f64> {
    let prior = Gamma::new(1.0 / theta, theta).unwrap();
    let log_l = |g: f64| if events == 0.0 { -g * exposure } else { events * g.ln() - g * exposure };
    let log_max = if events == 0.0 { 0.0 } else { log_l(events / exposure) };
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let g: f64 = prior.sample(rng);
        let e: f64 = Exp1.sample(rng);
        if log_l(g) - log_max >= -e {
            out.push(g);
        }
    }
    out
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Posterior `E[gamma]` and `E[log gamma]` against Monte Carlo draws.
pub fn posterior_vs_monte_carlo(subjects: usize, draws: usize, seed: u64) -> Check {
    let mut rng = stream(seed, 2);
    let data = random_records(&mut rng, subjects, 2);
    let w = random_weibull(&mut rng);
    let risk = random_linear(&mut rng, 2);
    let theta = rng.random_range(0.3..1.5);
    let state = weibull_state(w, theta, risk.clone());
    let posts = posteriors(&data, &state).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (r, post) in data.iter().zip(&posts) {
        let exposure = exposure(r, &w, &linear_scores(&risk, &r.covariates));
        let events = f64::from(u8::from(r.delta1) + u8::from(r.delta2));
        let g = posterior_draws(events, exposure, theta, draws, &mut rng);
        let logs: Vec<f64> = g.iter().map(|v| v.ln()).collect();
        let (m1, se1) = mean_and_se(&g);
        let (m2, se2) = mean_and_se(&logs);
        worst = worst.max((post.mean - m1).abs() / se1).max((post.log_mean - m2).abs() / se2);
    }
    verdict(
        worst < 3.0,
        format!("{subjects} subjects x {draws} draws, worst deviation {worst:.2} SE (limit 3)"),
    )
}

/// Weibull/linear data with a random frailty variance, drawn by the simulator.
pub fn simulated(n: usize, seed: u64, censoring: f64) -> (SimConfig, Dataset) {
    let mut cfg = SimConfig::neural_em_study(n, 0.5, RiskKind::Linear, 0.0, seed);
    let mut rng = stream(seed, 3);
    cfg.theta = rng.random_range(0.3..1.5);
    if censoring > 0.0 {
        cfg.censoring = Censoring::Target { fraction: censoring };
    }
    let data = simulate(&cfg).unwrap().data;
    (cfg, data)
}

/// Observed log-likelihood never decreases along EM iterations with the
/// risk functions and `theta` held fixed.
pub fn em_monotonicity(datasets: usize, seed: u64) -> Check {
    let mut worst_drop: f64 = 0.0;
    let mut rows = 0;
    for k in 0..datasets {
        let (cfg, data) = simulated(150, seed.wrapping_add(k as u64), 0.3);
        let mut rng = stream(seed, 100 + k as u64);
        let risk = RiskModel::Linear(random_linear(&mut rng, data.p()));
        let config = EmConfig {
            max_iterations: 60,
            tolerance: 1e-14,
            initial_theta: Some(cfg.theta),
            ..EmConfig::default()
        };
        let fit = run_em(&data, &RiskSpec::Fixed { risk, update_theta: false }, &config).map_err(|e| e.to_string())?;
        for pair in fit.trace.windows(2) {
            let drop = (pair[0].obs_loglik - pair[1].obs_loglik) / pair[0].obs_loglik.abs();
            worst_drop = worst_drop.max(drop);
            rows += 1;
        }
    }
    verdict(
        worst_drop <= 1e-10,
        format!("{datasets} datasets, {rows} steps, largest relative decrease {worst_drop:.2e} (slack 1e-10)"),
    )
}

/// Score of `Q` in every jump size at the M-step update, computed from the
/// risk sets by brute force; returns the largest `|score| / risk sum`.
pub fn m_step_scores(data: &Dataset, mean: &[f64], scores: &[[f64; 3]], hazards: &[StepHazard; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for (g, hz) in hazards.iter().enumerate() {
        for (&t, &jump) in hz.jump_times().iter().zip(hz.jump_sizes()) {
            let mut events = 0.0;
            let mut risk_sum = 0.0;
            for (i, r) in data.iter().enumerate() {
                let (event_time, at_risk, is_event) = match g {
                    0 => (r.y1, r.y1 >= t, r.delta1),
                    1 => (r.y2, r.y1 >= t, !r.delta1 && r.delta2),
                    _ => (r.y2 - r.y1, r.delta1 && r.y2 - r.y1 >= t, r.delta1 && r.delta2),
                };
                if is_event && event_time == t {
                    events += 1.0;
                }
                if at_risk {
                    risk_sum += mean[i] * scores[i][g].exp();
                }
            }
            worst = worst.max((events / jump - risk_sum).abs() / risk_sum);
        }
    }
    worst
}

pub fn m_step_stationarity(datasets: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..datasets {
        let (cfg, data) = simulated(200, seed.wrapping_add(1000 + k as u64), 0.25);
        let mut rng = stream(seed, 200 + k as u64);
        let risk = random_linear(&mut rng, data.p());
        let state = weibull_state(cfg.weibull, cfg.theta, risk);
        let posts = posteriors(&data, &state).map_err(|e| e.to_string())?;
        let scores = state.scores(&data).map_err(|e| e.to_string())?;
        let hazards = m_step(&data, &posts, &scores).map_err(|e| e.to_string())?;
        let mean: Vec<f64> = posts.iter().map(|p| p.mean).collect();
        worst = worst.max(m_step_scores(&data, &mean, &scores, &hazards));
    }
    verdict(worst < 1e-10, format!("{datasets} datasets, largest relative score {worst:.2e} (tolerance 1e-10)"))
}

/// Small random networks and posteriors for gradient checks.
pub fn gradient_problem(seed: u64) -> (Dataset, Vec<semicomp_core::FrailtyPosterior>, [Baseline; 3], NeuralRisk, f64) {
    let mut rng = stream(seed, 4);
    let data = random_records(&mut rng, 10, 3);
    let w = random_weibull(&mut rng);
    let mut net_rng = stream(seed, 5);
    let networks = [0, 1, 2].map(|_| {
        let net = RiskNetwork::init(3, &[5, 4], &mut net_rng);
        // nonzero hidden biases so every parameter matters
        let mut p = net.parameters();
        let last = p.len() - 1;
        for v in p[..last].iter_mut() {
            *v += 0.1 * rng.random_range(-1.0..1.0);
        }
        net.with_parameters(&p).unwrap()
    });
    let theta = rng.random_range(0.3..1.5);
    let state = weibull_state(w, theta, LinearRisk::zeros(3));
    let posts = posteriors(&data, &state).unwrap();
    let baselines = w.map(Baseline::Weibull);
    (data, posts, baselines, NeuralRisk { networks }, theta.ln())
}

/// Analytic loss gradient against central differences with step `1e-5`,
/// for every trainable network parameter and `xi`.
pub fn gradient_check(problems: usize, seed: u64) -> Check {
    let l2 = 1e-3;
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut checked = 0;
    for k in 0..problems {
        let (data, posts, baselines, risk, xi) = gradient_problem(seed.wrapping_add(k as u64));
        let grad = loss_gradient(&data, &posts, &baselines, &risk, xi, l2).map_err(|e| e.to_string())?;
        let eps = 1e-5;
        let f = |risk: &NeuralRisk, xi: f64| loss(&data, &posts, &baselines, risk, xi, l2).unwrap();
        let mut compare = |analytic: f64, numeric: f64| {
            let err = (analytic - numeric).abs();
            worst_abs = worst_abs.max(err);
            let rel = err / numeric.abs().max(analytic.abs()).max(f64::MIN_POSITIVE);
            if err > 1e-7 {
                worst = worst.max(rel);
            }
            checked += 1;
        };
        for g in 0..3 {
            let base = risk.networks[g].parameters();
            let flat = grad.networks[g].flatten();
            // the output bias is fixed at zero and excluded
            for j in 0..base.len() - 1 {
                let shifted = |d: f64| {
                    let mut p = base.clone();
                    p[j] += d;
                    let mut r = risk.clone();
                    r.networks[g] = risk.networks[g].with_parameters(&p).unwrap();
                    f(&r, xi)
                };
                compare(flat[j], (shifted(eps) - shifted(-eps)) / (2.0 * eps));
            }
        }
        compare(grad.xi, (f(&risk, xi + eps) - f(&risk, xi - eps)) / (2.0 * eps));
    }
    verdict(
        worst < 1e-4,
        format!(
            "{checked} partial derivatives, worst absolute error {worst_abs:.2e}, worst relative error above the 1e-7 floor {worst:.2e} (tolerance 1e-4)"
        ),
    )
}

/// Expected Brier score under known censoring equals the mean squared error
/// of the predictions plus `E[pi*(1 - pi*)]`, checked by Monte Carlo.
pub fn bbs_decomposition(n: usize, seed: u64) -> Check {
    let mut cfg = SimConfig::neural_em_study(n, 0.8, RiskKind::Linear, 0.0, seed);
    cfg.p = 1;
    cfg.covariates = CovariateDist::Uniform;
    let rate = 0.7;
    cfg.censoring = Censoring::Rate { rate };
    let sim = simulate(&cfg).map_err(|e| e.to_string())?;
    let g = KnownCensoring::Exponential { rate };
    let t = 0.5;
    let mut terms = Vec::with_capacity(n);
    let mut expected = Vec::with_capacity(n);
    for r in sim.data.iter() {
        let x = r.covariates[0];
        let a = cfg.weibull[0].cumulative(t) * x.exp() + cfg.weibull[1].cumulative(t) * x.exp();
        let truth = (1.0 + cfg.theta * a).powf(-1.0 / cfg.theta);
        // deliberately miscalibrated predictions
        let pi = (truth + 0.15 * (x - 0.5)).clamp(0.0, 1.0);
        let one = Dataset::new(vec![r.clone()]).unwrap();
        terms.push(bbs(&one, &[pi], &g, t).map_err(|e| e.to_string())?);
        expected.push((truth - pi).powi(2) + truth * (1.0 - truth));
    }
    let (m, se) = mean_and_se(&terms);
    let target = expected.iter().sum::<f64>() / n as f64;
    let z = (m - target).abs() / se;
    verdict(
        z < 3.0,
        format!("n={n}: Monte Carlo {m:.5} vs MSE + variance {target:.5}, {z:.2} SE (limit 3)"),
    )
}

/// Every simulator design yields valid data with `delta1 = 0 => y1 = y2`.
pub fn simulator_validity(n: usize, seed: u64) -> Check {
    let mut configs = Vec::new();
    for s in 1..=4 {
        configs.push(SimConfig::bbs_study(s, n, seed).unwrap());
    }
    for theta in [0.5, 2.0] {
        for risk in [RiskKind::Linear, RiskKind::NonLinear, RiskKind::NonMonotonic] {
            for c in [0.0, 0.25, 0.5] {
                configs.push(SimConfig::neural_em_study(n, theta, risk, c, seed));
            }
        }
    }
    let mut rows = 0;
    for cfg in &configs {
        let sim = simulate(cfg).map_err(|e| format!("{e}"))?;
        let revalidated = Dataset::new(sim.data.records().to_vec()).map_err(|e| e.to_string())?;
        for r in revalidated.iter() {
            if !r.delta1 && r.y1 != r.y2 {
                return Err(format!("delta1 = 0 with y1 != y2 in design {cfg:?}"));
            }
            if r.y1 > r.y2 || !(r.y1 > 0.0) {
                return Err(format!("invalid times in design {cfg:?}"));
            }
        }
        rows += revalidated.len();
    }
    Ok(format!("{} designs, {rows} records valid", configs.len()))
}

/// Weibull hazard used by tests that need the truth on a grid.
pub fn weibull(phi1: f64, phi2: f64) -> WeibullHazard {
    WeibullHazard { phi1, phi2 }
}
