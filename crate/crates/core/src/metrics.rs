//! Censoring survival estimation and the inverse-probability-of-censoring
//! weighted bivariate Brier score.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::exp;
use crate::{Dataset, Error, Result};

/// Grid size used for integrated scores unless stated otherwise.
pub const DEFAULT_POINTS: usize = 100;

/// Right-continuous product-limit survival curve with `S(0) = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringCurve {
    times: Vec<f64>,
    survival: Vec<f64>,
}

impl CensoringCurve {
    /// Product-limit estimate from `(time, event)` pairs.
    pub fn kaplan_meier(pairs: impl IntoIterator<Item = (f64, bool)>) -> Self {
        let mut pairs: Vec<(f64, bool)> = pairs.into_iter().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut at_risk = pairs.len() as f64;
        let mut s = 1.0;
        let mut times = Vec::new();
        let mut survival = Vec::new();
        let mut k = 0;
        while k < pairs.len() {
            let t = pairs[k].0;
            let (mut events, mut leaving) = (0.0, 0.0);
            while k < pairs.len() && pairs[k].0 == t {
                if pairs[k].1 {
                    events += 1.0;
                }
                leaving += 1.0;
                k += 1;
            }
            if events > 0.0 {
                s *= 1.0 - events / at_risk;
                times.push(t);
                survival.push(s);
            }
            at_risk -= leaving;
        }
        Self { times, survival }
    }

    /// Reverse Kaplan-Meier: censoring (`delta2 = 0` at `Y2`) is the event.
    pub fn reverse_km(data: &Dataset) -> Self {
        Self::kaplan_meier(data.iter().map(|r| (r.y2, !r.delta2)))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.survival
    }

    fn value_before(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// A censoring survival function `G(t) = Pr(C > t)`.
pub trait CensoringSurvival {
    fn at(&self, t: f64) -> f64;
    /// `G(t-)`
    fn left_limit(&self, t: f64) -> f64;
}

impl CensoringSurvival for CensoringCurve {
    fn at(&self, t: f64) -> f64 {
        self.value_before(self.times.partition_point(|&s| s <= t))
    }

    fn left_limit(&self, t: f64) -> f64 {
        self.value_before(self.times.partition_point(|&s| s < t))
    }
}

/// Censoring law known in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KnownCensoring {
    None,
    Exponential { rate: f64 },
}

impl CensoringSurvival for KnownCensoring {
    fn at(&self, t: f64) -> f64 {
        match *self {
            KnownCensoring::None => 1.0,
            KnownCensoring::Exponential { rate } => exp(-rate * t.max(0.0)),
        }
    }

    fn left_limit(&self, t: f64) -> f64 {
        self.at(t)
    }
}

fn weight(g: &impl CensoringSurvival, t: f64, left: bool) -> Result<f64> {
    let w = if left { g.left_limit(t) } else { g.at(t) };
    if w > 0.0 {
        Ok(w)
    } else {
        Err(Error::ZeroWeight { time: t })
    }
}

/// Bivariate Brier score at `t` for predictions `pi[i] ~ Pr(T1 > t, T2 > t | x_i)`,
/// averaged over subjects.
pub fn bbs(data: &Dataset, pi: &[f64], g: &impl CensoringSurvival, t: f64) -> Result<f64> {
    if pi.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: pi.len(),
        });
    }
    let mut total = 0.0;
    for (r, &p) in data.iter().zip(pi) {
        total += if r.delta1 && r.y1 <= t {
            p * p / weight(g, r.y1, true)?
        } else if !r.delta1 && r.delta2 && r.y2 <= t {
            p * p / weight(g, r.y2, true)?
        } else if r.y1 > t {
            (1.0 - p) * (1.0 - p) / weight(g, t, false)?
        } else {
            0.0
        };
    }
    Ok(total / data.len() as f64)
}

/// `horizon * k / n_points` for `k = 1..=n_points`.
pub fn evaluation_grid(horizon: f64, n_points: usize) -> Vec<f64> {
    (1..=n_points).map(|k| horizon * k as f64 / n_points as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbsCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Trapezoidal integral over the grid.
    pub raw_integral: f64,
    /// `raw_integral` divided by the grid span (the value itself on a
    /// one-point grid).
    pub integrated: f64,
    /// Requested horizon; the grid ends earlier when `G` reaches zero.
    pub horizon: f64,
}

impl BbsCurve {
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>, horizon: f64) -> Self {
        let mut raw = 0.0;
        for k in 1..grid.len() {
            raw += 0.5 * (values[k] + values[k - 1]) * (grid[k] - grid[k - 1]);
        }
        let integrated = match grid.len() {
            0 => f64::NAN,
            1 => values[0],
            n => raw / (grid[n - 1] - grid[0]),
        };
        Self {
            grid,
            values,
            raw_integral: raw,
            integrated,
            horizon,
        }
    }
}

/// Bivariate Brier score over an evenly spaced grid ending at `horizon`.
///
/// `predict(t)` returns the predictions of every subject at `t`. Grid points
/// where `G` has reached zero are dropped.
pub fn integrated_bbs<P>(
    data: &Dataset,
    mut predict: P,
    g: &impl CensoringSurvival,
    horizon: f64,
    n_points: usize,
) -> Result<BbsCurve>
where
    P: FnMut(f64) -> Result<Vec<f64>>,
{
    if !(horizon > 0.0) || n_points == 0 {
        return Err(Error::InvalidConfig("horizon and grid size must be positive".into()));
    }
    let full = evaluation_grid(horizon, n_points);
    let usable = full.iter().take_while(|&&t| g.at(t) > 0.0).count();
    if usable == 0 {
        return Err(Error::ZeroWeight { time: full[0] });
    }
    if usable < full.len() {
        log::warn!(
            "censoring survival reaches zero before the horizon; truncating at t={}",
            full[usable - 1]
        );
    }
    let grid: Vec<f64> = full[..usable].to_vec();
    let mut values = Vec::with_capacity(usable);
    for &t in &grid {
        values.push(bbs(data, &predict(t)?, g, t)?);
    }
    Ok(BbsCurve::from_values(grid, values, horizon))
}
