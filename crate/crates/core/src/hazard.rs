//! Cumulative baseline hazards: nonparametric step functions and Weibull.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{ln, powf};
use crate::{Error, Result};

/// Right-continuous step cumulative hazard with jumps at `jump_times`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "StepHazardRepr", into = "StepHazardRepr")]
pub struct StepHazard {
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepHazardRepr {
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
}

impl TryFrom<StepHazardRepr> for StepHazard {
    type Error = Error;

    fn try_from(r: StepHazardRepr) -> Result<Self> {
        StepHazard::new(r.jump_times, r.jump_sizes)
    }
}

impl From<StepHazard> for StepHazardRepr {
    fn from(h: StepHazard) -> Self {
        StepHazardRepr {
            jump_times: h.jump_times,
            jump_sizes: h.jump_sizes,
        }
    }
}

impl StepHazard {
    /// Times must be strictly increasing and sizes positive and finite.
    pub fn new(jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Result<Self> {
        if jump_times.len() != jump_sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: jump_times.len(),
                found: jump_sizes.len(),
            });
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("jump times must be strictly increasing"));
        }
        if jump_sizes.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("jump sizes must be positive and finite"));
        }
        Ok(Self::from_parts(jump_times, jump_sizes))
    }

    pub(crate) fn from_parts(jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Self {
        let mut total = 0.0;
        let cumulative = jump_sizes
            .iter()
            .map(|s| {
                total += s;
                total
            })
            .collect();
        Self {
            jump_times,
            jump_sizes,
            cumulative,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }

    /// `Lambda(t)`: sum of all jumps at times `<= t`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Jump size at exactly `t`, zero between jumps.
    pub fn jump_at(&self, t: f64) -> f64 {
        match self.jump_times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => self.jump_sizes[k],
            Err(_) => 0.0,
        }
    }
}

/// Weibull baseline with hazard `phi1 * phi2 * s^(phi2 - 1)` and cumulative
/// hazard `phi1 * t^phi2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullHazard {
    pub phi1: f64,
    pub phi2: f64,
}

impl WeibullHazard {
    pub fn new(phi1: f64, phi2: f64) -> Result<Self> {
        if !(phi1 > 0.0 && phi2 > 0.0) || !phi1.is_finite() || !phi2.is_finite() {
            return Err(Error::Domain("Weibull parameters must be positive"));
        }
        Ok(Self { phi1, phi2 })
    }

    pub fn hazard(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return if self.phi2 < 1.0 {
                f64::INFINITY
            } else if self.phi2 == 1.0 {
                self.phi1
            } else {
                0.0
            };
        }
        self.phi1 * self.phi2 * powf(s, self.phi2 - 1.0)
    }

    pub fn log_hazard(&self, s: f64) -> f64 {
        ln(self.phi1) + ln(self.phi2) + (self.phi2 - 1.0) * ln(s)
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.phi1 * powf(t, self.phi2)
        }
    }

    /// Time at which the cumulative hazard reaches `level`.
    pub fn inverse_cumulative(&self, level: f64) -> f64 {
        powf(level / self.phi1, 1.0 / self.phi2)
    }
}

/// A baseline for one transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    Step(StepHazard),
    Weibull(WeibullHazard),
}

impl Baseline {
    pub fn cumulative(&self, t: f64) -> f64 {
        match self {
            Baseline::Step(h) => h.cumulative(t),
            Baseline::Weibull(w) => w.cumulative(t),
        }
    }

    /// The hazard factor at an observed event time: the jump size for step
    /// baselines, the hazard density for Weibull baselines.
    pub fn event_rate(&self, t: f64) -> f64 {
        match self {
            Baseline::Step(h) => h.jump_at(t),
            Baseline::Weibull(w) => w.hazard(t),
        }
    }
}

impl From<StepHazard> for Baseline {
    fn from(h: StepHazard) -> Self {
        Baseline::Step(h)
    }
}

impl From<WeibullHazard> for Baseline {
    fn from(w: WeibullHazard) -> Self {
        Baseline::Weibull(w)
    }
}
