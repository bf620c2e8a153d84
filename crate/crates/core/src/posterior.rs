//! Closed-form E-step: the posterior frailty distribution is
//! `Gamma(shape = 1/theta + delta1 + delta2, rate = 1/theta + A)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::likelihood::{exposures, risk_weighted_exposure, ModelState};
use crate::math::{digamma, ln};
use crate::{Dataset, ObservedRecord, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrailtyPosterior {
    pub a_tilde: f64,
    pub b_tilde: f64,
    /// `E[gamma | D]`
    pub mean: f64,
    /// `E[log gamma | D]`
    pub log_mean: f64,
}

impl FrailtyPosterior {
    /// From the event count `delta1 + delta2` and the risk-weighted exposure
    /// `A = Lambda01(Y1) e^h1 + Lambda02(Y1) e^h2 + delta1 Lambda03(Y2 - Y1) e^h3`.
    pub fn from_parts(events: f64, exposure: f64, theta: f64) -> Self {
        let inv = 1.0 / theta;
        let a_tilde = inv + events;
        let b_tilde = inv + exposure;
        // a_tilde > 0 whenever theta > 0
        let psi = digamma(a_tilde).unwrap_or(f64::NAN);
        Self {
            a_tilde,
            b_tilde,
            mean: a_tilde / b_tilde,
            log_mean: psi - ln(b_tilde),
        }
    }
}

pub fn posterior(r: &ObservedRecord, state: &ModelState) -> Result<FrailtyPosterior> {
    let h = state.risk.scores(&r.covariates)?;
    Ok(posterior_scored(r, &state.baselines, state.theta, &h))
}

pub(crate) fn posterior_scored(
    r: &ObservedRecord,
    baselines: &[crate::Baseline; 3],
    theta: f64,
    h: &[f64; 3],
) -> FrailtyPosterior {
    let a = risk_weighted_exposure(&exposures(r, baselines), h);
    FrailtyPosterior::from_parts(r.event_count(), a, theta)
}

/// Posteriors for every subject.
pub fn posteriors(data: &Dataset, state: &ModelState) -> Result<Vec<FrailtyPosterior>> {
    let scores = state.scores(data)?;
    Ok(data
        .iter()
        .zip(&scores)
        .map(|(r, h)| posterior_scored(r, &state.baselines, state.theta, h))
        .collect())
}
