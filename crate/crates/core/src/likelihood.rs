//! Complete-data and observed-data likelihoods, and the model-based joint
//! event-free survival.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hazard::Baseline;
use crate::math::{exp, ln, ln_1p, ln_gamma};
use crate::posterior::FrailtyPosterior;
use crate::risk::RiskModel;
use crate::{Dataset, Error, ObservationCase, ObservedRecord, Result};

/// Below this frailty variance the no-frailty limits are used.
pub const THETA_FLOOR: f64 = 1e-12;

/// Parameters `{Lambda01, Lambda02, Lambda03, theta}` and the log-risk
/// functions. `baselines[2]` is evaluated on the sojourn time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub baselines: [Baseline; 3],
    pub theta: f64,
    pub risk: RiskModel,
}

impl ModelState {
    pub fn new(baselines: [Baseline; 3], theta: f64, risk: RiskModel) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Domain("theta must be positive"));
        }
        Ok(Self {
            baselines,
            theta,
            risk,
        })
    }

    pub fn scores(&self, data: &Dataset) -> Result<Vec<[f64; 3]>> {
        self.risk.score_all(data)
    }
}

/// Cumulative baseline exposures `[Lambda01(Y1), Lambda02(Y1), delta1 Lambda03(Y2 - Y1)]`.
#[inline]
pub fn exposures(r: &ObservedRecord, baselines: &[Baseline; 3]) -> [f64; 3] {
    [
        baselines[0].cumulative(r.y1),
        baselines[1].cumulative(r.y1),
        if r.delta1 {
            baselines[2].cumulative(r.sojourn())
        } else {
            0.0
        },
    ]
}

/// `sum_g exposure_g * exp(h_g)`: the frailty's rate contribution.
#[inline]
pub fn risk_weighted_exposure(exposure: &[f64; 3], h: &[f64; 3]) -> f64 {
    exposure[0] * exp(h[0]) + exposure[1] * exp(h[1]) + exposure[2] * exp(h[2])
}

/// `sum_g event_g * (log rate_g + h_g)` over the transitions observed for
/// this subject. Step baselines contribute their jump size.
pub(crate) fn event_log_terms(
    subject: usize,
    r: &ObservedRecord,
    baselines: &[Baseline; 3],
    h: &[f64; 3],
) -> Result<f64> {
    let times = [r.y1, r.y2, r.sojourn()];
    let mut total = 0.0;
    for (g, &event) in r.transition_events().iter().enumerate() {
        if event {
            let rate = baselines[g].event_rate(times[g]);
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::NonFiniteLikelihood {
                    subject,
                    transition: g + 1,
                });
            }
            total += ln(rate) + h[g];
        }
    }
    Ok(total)
}

/// Log of the mean-one gamma density with variance `theta` at `gamma`.
pub fn log_frailty_density(gamma: f64, theta: f64) -> f64 {
    let r = 1.0 / theta;
    r * ln(r) - ln_gamma(r) + (r - 1.0) * ln(gamma) - r * gamma
}

fn subject_complete(
    subject: usize,
    r: &ObservedRecord,
    gamma: f64,
    state: &ModelState,
    h: &[f64; 3],
) -> Result<f64> {
    let a = risk_weighted_exposure(&exposures(r, &state.baselines), h);
    Ok(log_frailty_density(gamma, state.theta)
        + r.event_count() * ln(gamma)
        + event_log_terms(subject, r, &state.baselines, h)?
        - gamma * a)
}

/// Log of the augmented likelihood given frailties `gamma`.
pub fn complete_data_log_likelihood(data: &Dataset, gamma: &[f64], state: &ModelState) -> Result<f64> {
    if gamma.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: gamma.len(),
        });
    }
    let scores = state.scores(data)?;
    let mut total = 0.0;
    for (i, r) in data.iter().enumerate() {
        total += subject_complete(i, r, gamma[i], state, &scores[i])?;
    }
    Ok(total)
}

/// One subject's augmented log-likelihood assembled case by case from the
/// conditional survival functions `S(t1, t1 | gamma)` and
/// `S_{2|1}(t2 | t1, gamma)` and the transition hazards.
pub fn case_log_likelihood(r: &ObservedRecord, gamma: f64, state: &ModelState) -> Result<f64> {
    let h = state.risk.scores(&r.covariates)?;
    let b = &state.baselines;
    let log_s11 = |t: f64| -gamma * (b[0].cumulative(t) * exp(h[0]) + b[1].cumulative(t) * exp(h[1]));
    let log_s21 = |t2: f64, t1: f64| -gamma * b[2].cumulative(t2 - t1) * exp(h[2]);
    let log_hazard = |g: usize, t: f64| -> Result<f64> {
        let rate = b[g].event_rate(t);
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::NonFiniteLikelihood {
                subject: 0,
                transition: g + 1,
            });
        }
        Ok(ln(gamma) + ln(rate) + h[g])
    };
    let contribution = match r.case() {
        ObservationCase::Both => {
            log_s11(r.y1) + log_hazard(0, r.y1)? + log_s21(r.y2, r.y1) + log_hazard(2, r.y2 - r.y1)?
        }
        ObservationCase::TerminalOnly => log_s11(r.y1) + log_hazard(1, r.y2)?,
        ObservationCase::NonTerminalOnly => log_s11(r.y1) + log_hazard(0, r.y1)? + log_s21(r.y2, r.y1),
        ObservationCase::Neither => log_s11(r.y1),
    };
    Ok(log_frailty_density(gamma, state.theta) + contribution)
}

/// Per-subject marginal log-likelihood with the frailty integrated out.
pub(crate) fn subject_observed(
    subject: usize,
    r: &ObservedRecord,
    baselines: &[Baseline; 3],
    theta: f64,
    h: &[f64; 3],
) -> Result<f64> {
    let a = risk_weighted_exposure(&exposures(r, baselines), h);
    let events = event_log_terms(subject, r, baselines, h)?;
    if theta < THETA_FLOOR {
        return Ok(events - a);
    }
    let post = FrailtyPosterior::from_parts(r.event_count(), a, theta);
    let inv = 1.0 / theta;
    Ok(ln_gamma(post.a_tilde) - ln_gamma(inv) - inv * ln(theta) - post.a_tilde * ln(post.b_tilde) + events)
}

/// Observed-data log-likelihood (gamma frailty marginalized in closed form).
pub fn observed_log_likelihood(data: &Dataset, state: &ModelState) -> Result<f64> {
    let scores = state.scores(data)?;
    observed_log_likelihood_scored(data, &state.baselines, state.theta, &scores)
}

pub(crate) fn observed_log_likelihood_scored(
    data: &Dataset,
    baselines: &[Baseline; 3],
    theta: f64,
    scores: &[[f64; 3]],
) -> Result<f64> {
    let mut total = 0.0;
    for (i, r) in data.iter().enumerate() {
        total += subject_observed(i, r, baselines, theta, &scores[i])?;
    }
    Ok(total)
}

/// Gamma Laplace transform `(1 + theta A)^(-1/theta)`, `exp(-A)` as
/// `theta -> 0`.
#[inline]
pub fn marginal_survival(a: f64, theta: f64) -> f64 {
    if theta < THETA_FLOOR {
        exp(-a)
    } else {
        exp(-ln_1p(theta * a) / theta)
    }
}

/// `Pr(T1 > t, T2 > t | x)` under the fitted model, frailty marginalized.
pub fn joint_event_free_survival(x: &[f64], t: f64, state: &ModelState) -> Result<f64> {
    let h = state.risk.scores(x)?;
    Ok(joint_event_free_survival_scored(&h, t, &state.baselines, state.theta))
}

pub(crate) fn joint_event_free_survival_scored(h: &[f64; 3], t: f64, baselines: &[Baseline; 3], theta: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let a = baselines[0].cumulative(t) * exp(h[0]) + baselines[1].cumulative(t) * exp(h[1]);
    marginal_survival(a, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::{StepHazard, WeibullHazard};
    use crate::risk::RiskKind;
    use alloc::vec;

    fn zero_state(theta: f64) -> ModelState {
        ModelState::new(
            [
                Baseline::Step(StepHazard::empty()),
                Baseline::Step(StepHazard::empty()),
                Baseline::Step(StepHazard::empty()),
            ],
            theta,
            RiskModel::Zero,
        )
        .unwrap()
    }

    #[test]
    fn complete_likelihood_trivial_subject() {
        let data = Dataset::new(vec![ObservedRecord::new(1.0, false, 1.0, false, vec![])]).unwrap();
        let ll = complete_data_log_likelihood(&data, &[1.0], &zero_state(1.0)).unwrap();
        assert!((ll + 1.0).abs() < 1e-14);
    }

    #[test]
    fn observed_likelihood_trivial_subject() {
        let data = Dataset::new(vec![ObservedRecord::new(1.0, false, 1.0, false, vec![])]).unwrap();
        assert!(observed_log_likelihood(&data, &zero_state(1.0)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn zero_jump_at_event_is_an_error() {
        let data = Dataset::new(vec![ObservedRecord::new(1.0, true, 2.0, true, vec![])]).unwrap();
        assert!(matches!(
            observed_log_likelihood(&data, &zero_state(0.5)),
            Err(Error::NonFiniteLikelihood { transition: 1, .. })
        ));
        assert!(complete_data_log_likelihood(&data, &[1.0], &zero_state(0.5)).is_err());
    }

    #[test]
    fn case_four_is_joint_survival() {
        let w = Baseline::Weibull(WeibullHazard::new(0.2, 1.5).unwrap());
        let state = ModelState::new([w.clone(), w.clone(), w], 0.5, RiskModel::Truth { family: RiskKind::Linear }).unwrap();
        let r = ObservedRecord::new(0.8, false, 0.8, false, vec![0.3]);
        let gamma = 1.7;
        let got = case_log_likelihood(&r, gamma, &state).unwrap() - log_frailty_density(gamma, 0.5);
        let lam = 0.2 * libm::pow(0.8, 1.5);
        let expect = -gamma * (lam * libm::exp(0.3) * 2.0);
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn case_two_adds_terminal_hazard() {
        let w = Baseline::Weibull(WeibullHazard::new(0.2, 1.5).unwrap());
        let state = ModelState::new([w.clone(), w.clone(), w.clone()], 0.5, RiskModel::Zero).unwrap();
        let r = ObservedRecord::new(0.8, false, 0.8, true, vec![]);
        let neither = ObservedRecord::new(0.8, false, 0.8, false, vec![]);
        let gamma = 0.9;
        let diff = case_log_likelihood(&r, gamma, &state).unwrap() - case_log_likelihood(&neither, gamma, &state).unwrap();
        let Baseline::Weibull(wb) = w else { unreachable!() };
        assert!((diff - ln(gamma * wb.hazard(0.8))).abs() < 1e-14);
    }

    #[test]
    fn joint_survival_closed_form() {
        let s = marginal_survival(0.5, 0.5);
        assert!((s - 0.64).abs() < 1e-14);
        assert_eq!(joint_event_free_survival(&[], 0.0, &zero_state(0.5)).unwrap(), 1.0);
    }

    #[test]
    fn joint_survival_small_theta_limit() {
        let a = 0.7;
        assert!((marginal_survival(a, 1e-10) - exp(-a)).abs() < 1e-6);
        assert_eq!(marginal_survival(a, 1e-13), exp(-a));
    }
}
