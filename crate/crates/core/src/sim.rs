//! Simulation of semi-competing data from the gamma-frailty illness-death
//! model with Weibull baselines.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::hazard::{Baseline, WeibullHazard};
use crate::likelihood::marginal_survival;
use crate::math::{exp, mean};
use crate::risk::RiskKind;
use crate::rng::{stream, Rng};
use crate::{Dataset, Error, ObservedRecord, Result};

/// Latent draws used to calibrate censoring rates; independent of the
/// replicate seed so one rate serves every replicate of a design.
const CALIBRATION_DRAWS: usize = 100_000;
const CALIBRATION_SEED: u64 = 0x5EED_CA11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateDist {
    StandardNormal,
    /// `Uniform(0, 1)`
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Censoring {
    None,
    /// Exponential censoring with a known rate.
    Rate { rate: f64 },
    /// Exponential censoring calibrated so that `Pr(delta2 = 0) = fraction`.
    Target { fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub theta: f64,
    pub weibull: [WeibullHazard; 3],
    pub risk_kind: RiskKind,
    pub p: usize,
    pub covariates: CovariateDist,
    pub censoring: Censoring,
    pub seed: u64,
}

impl SimConfig {
    /// Design of the Brier-score study: Weibull scale 0.2 and shape 1.5 for
    /// all transitions, `theta = 0.5`. Settings 2 and 4 add one uniform
    /// covariate with `h_g(x) = x`; settings 3 and 4 censor half the sample.
    pub fn bbs_study(setting: u8, n: usize, seed: u64) -> Result<Self> {
        let (covariate, censored) = match setting {
            1 => (false, false),
            2 => (true, false),
            3 => (false, true),
            4 => (true, true),
            _ => return Err(Error::InvalidConfig(alloc::format!("unknown setting {setting}"))),
        };
        let w = WeibullHazard { phi1: 0.2, phi2: 1.5 };
        Ok(Self {
            n,
            theta: 0.5,
            weibull: [w; 3],
            risk_kind: if covariate { RiskKind::Linear } else { RiskKind::None },
            p: usize::from(covariate),
            covariates: CovariateDist::Uniform,
            censoring: if censored {
                Censoring::Target { fraction: 0.5 }
            } else {
                Censoring::None
            },
            seed,
        })
    }

    /// Design of the neural EM study: two standard normal covariates,
    /// Weibull `(2, 2.25)` for transitions 1 and 2 and `(0.75, 2)` for
    /// transition 3.
    pub fn neural_em_study(n: usize, theta: f64, risk_kind: RiskKind, censored_fraction: f64, seed: u64) -> Self {
        let w12 = WeibullHazard { phi1: 2.0, phi2: 2.25 };
        let w3 = WeibullHazard { phi1: 0.75, phi2: 2.0 };
        Self {
            n,
            theta,
            weibull: [w12, w12, w3],
            risk_kind,
            p: 2,
            covariates: CovariateDist::StandardNormal,
            censoring: if censored_fraction > 0.0 {
                Censoring::Target {
                    fraction: censored_fraction,
                }
            } else {
                Censoring::None
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return bad("theta must be positive");
        }
        for w in &self.weibull {
            WeibullHazard::new(w.phi1, w.phi2)?;
        }
        match self.censoring {
            Censoring::Rate { rate } if !(rate > 0.0) || !rate.is_finite() => bad("censoring rate must be positive"),
            Censoring::Target { fraction } if !(0.0..1.0).contains(&fraction) => bad("censoring fraction must lie in [0, 1)"),
            _ => Ok(()),
        }
    }

    pub fn baselines(&self) -> [Baseline; 3] {
        self.weibull.map(Baseline::Weibull)
    }

    /// True log-risk of every transition.
    pub fn true_risk(&self, x: &[f64]) -> [f64; 3] {
        [self.risk_kind.eval(x); 3]
    }
}

/// Unobserved quantities behind one simulated record. `t1` is infinite when
/// the terminal event came first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub gamma: f64,
    pub h: [f64; 3],
    pub t1: f64,
    pub t2: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    pub latent: Vec<LatentRecord>,
    /// Exponential censoring rate used (zero without censoring).
    pub censoring_rate: f64,
}

struct Sampler {
    frailty: Gamma<f64>,
}

impl Sampler {
    fn new(theta: f64) -> Result<Self> {
        Ok(Self {
            frailty: Gamma::new(1.0 / theta, theta).map_err(|_| Error::Domain("invalid frailty variance"))?,
        })
    }

    fn covariates(&self, cfg: &SimConfig, rng: &mut Rng) -> Vec<f64> {
        (0..cfg.p)
            .map(|_| match cfg.covariates {
                CovariateDist::StandardNormal => StandardNormal.sample(rng),
                CovariateDist::Uniform => rng.random::<f64>(),
            })
            .collect()
    }

    /// Time with cumulative hazard `scale * Lambda(t)`.
    fn event_time(w: &WeibullHazard, scale: f64, rng: &mut Rng) -> f64 {
        let e: f64 = Exp1.sample(rng);
        w.inverse_cumulative((e / scale).max(f64::MIN_POSITIVE))
    }

    /// `(gamma, h, t1, t2)` for one subject.
    fn latent(&self, cfg: &SimConfig, x: &[f64], rng: &mut Rng) -> (f64, [f64; 3], f64, f64) {
        let gamma = self.frailty.sample(rng).max(f64::MIN_POSITIVE);
        let h = cfg.true_risk(x);
        let t1 = Self::event_time(&cfg.weibull[0], gamma * exp(h[0]), rng);
        let t2 = Self::event_time(&cfg.weibull[1], gamma * exp(h[1]), rng);
        if t1 < t2 {
            let s = Self::event_time(&cfg.weibull[2], gamma * exp(h[2]), rng);
            (gamma, h, t1, t1 + s)
        } else {
            (gamma, h, f64::INFINITY, t2)
        }
    }
}

/// Exponential rate giving censored fraction `target`, found by bisection
/// on `mean(1 - exp(-r T2))` over latent terminal times.
pub fn calibrate_censoring_rate(config: &SimConfig, target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::InvalidConfig("censoring fraction must lie in [0, 1)".into()));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let sampler = Sampler::new(config.theta)?;
    let mut rng = stream(CALIBRATION_SEED, 0);
    let t2: Vec<f64> = (0..CALIBRATION_DRAWS)
        .map(|_| {
            let x = sampler.covariates(config, &mut rng);
            sampler.latent(config, &x, &mut rng).3
        })
        .collect();
    let censored = |r: f64| t2.iter().map(|t| 1.0 - exp(-r * t)).sum::<f64>() / t2.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    while censored(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain("censoring target unreachable"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws one dataset. Records are validated before being returned.
pub fn simulate(config: &SimConfig) -> Result<SimulatedData> {
    config.validate()?;
    let rate = match config.censoring {
        Censoring::None => 0.0,
        Censoring::Rate { rate } => rate,
        Censoring::Target { fraction } => calibrate_censoring_rate(config, fraction)?,
    };
    simulate_with_rate(config, rate)
}

/// As [`simulate`] with an explicit censoring rate (zero disables censoring).
pub fn simulate_with_rate(config: &SimConfig, rate: f64) -> Result<SimulatedData> {
    config.validate()?;
    let sampler = Sampler::new(config.theta)?;
    let censor = if rate > 0.0 {
        Some(Exp::new(rate).map_err(|_| Error::Domain("invalid censoring rate"))?)
    } else {
        None
    };
    let mut rng = stream(config.seed, 0);
    let mut records = Vec::with_capacity(config.n);
    let mut latent = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let x = sampler.covariates(config, &mut rng);
        let (gamma, h, t1, t2) = sampler.latent(config, &x, &mut rng);
        let c = censor.map_or(f64::INFINITY, |d| d.sample(&mut rng));
        let delta2 = t2 <= c;
        let y2 = if delta2 { t2 } else { c };
        let delta1 = t1 <= y2;
        let y1 = if delta1 { t1 } else { y2 };
        records.push(ObservedRecord::new(y1, delta1, y2, delta2, x));
        latent.push(LatentRecord { gamma, h, t1, t2, c });
    }
    Ok(SimulatedData {
        data: Dataset::new(records)?,
        latent,
        censoring_rate: rate,
    })
}

/// `Pr(T1 > t, T2 > t | x)` under the generating model: conditional on
/// `gamma` when given, frailty-marginalized otherwise.
pub fn true_survival(config: &SimConfig, x: &[f64], t: f64, gamma: Option<f64>) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let h = config.true_risk(x);
    let a = config.weibull[0].cumulative(t) * exp(h[0]) + config.weibull[1].cumulative(t) * exp(h[1]);
    match gamma {
        Some(g) => exp(-g * a),
        None => marginal_survival(a, config.theta),
    }
}

/// Empirical censored fraction `Pr(delta2 = 0)`.
pub fn censored_fraction(data: &Dataset) -> f64 {
    let flags: Vec<f64> = data.iter().map(|r| if r.delta2 { 0.0 } else { 1.0 }).collect();
    mean(&flags)
}
