//! Observed semi-competing records and dataset validation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ValidationReport, ValidationRule, Violation};
use crate::{Error, Result};

/// One subject's observation `(Y1, delta1, Y2, delta2, x)`.
///
/// `y1` is the non-terminal time or the end of follow-up, whichever comes
/// first; `y2` is the terminal time or censoring time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    pub y1: f64,
    pub delta1: bool,
    pub y2: f64,
    pub delta2: bool,
    pub covariates: Vec<f64>,
}

/// The four observable event progressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationCase {
    /// Non-terminal then terminal event.
    Both,
    /// Terminal event without a prior non-terminal event.
    TerminalOnly,
    /// Non-terminal event, then censored.
    NonTerminalOnly,
    /// Censored before either event.
    Neither,
}

impl ObservedRecord {
    pub fn new(y1: f64, delta1: bool, y2: f64, delta2: bool, covariates: Vec<f64>) -> Self {
        Self {
            y1,
            delta1,
            y2,
            delta2,
            covariates,
        }
    }

    pub fn case(&self) -> ObservationCase {
        match (self.delta1, self.delta2) {
            (true, true) => ObservationCase::Both,
            (false, true) => ObservationCase::TerminalOnly,
            (true, false) => ObservationCase::NonTerminalOnly,
            (false, false) => ObservationCase::Neither,
        }
    }

    /// Time spent in the non-terminal state.
    #[inline]
    pub fn sojourn(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn d1(&self) -> f64 {
        f64::from(u8::from(self.delta1))
    }

    #[inline]
    pub fn d2(&self) -> f64 {
        f64::from(u8::from(self.delta2))
    }

    /// Event indicators of the three transitions:
    /// `delta1`, `(1 - delta1) delta2`, `delta1 delta2`.
    #[inline]
    pub fn transition_events(&self) -> [bool; 3] {
        [
            self.delta1,
            !self.delta1 && self.delta2,
            self.delta1 && self.delta2,
        ]
    }

    /// Number of observed events, `delta1 + delta2`.
    #[inline]
    pub fn event_count(&self) -> f64 {
        self.d1() + self.d2()
    }

    fn violations(&self, row: usize, p: usize, out: &mut Vec<Violation>) {
        let mut push = |rule| out.push(Violation { row, rule });
        let positive = |t: f64| t.is_finite() && t > 0.0;
        if !positive(self.y1) || !positive(self.y2) {
            push(ValidationRule::NonPositiveTime);
        }
        if self.y1 > self.y2 {
            push(ValidationRule::WedgeViolation);
        }
        if !self.delta1 && self.y1 != self.y2 {
            push(ValidationRule::IndicatorInconsistency);
        }
        if self.delta1 && self.delta2 && self.y1 == self.y2 {
            push(ValidationRule::ZeroSojourn);
        }
        if self.covariates.len() != p {
            push(ValidationRule::RaggedCovariates);
        }
        if self.covariates.iter().any(|x| !x.is_finite()) {
            push(ValidationRule::NonFiniteCovariate);
        }
    }
}

/// A validated collection of records sharing one covariate dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<ObservedRecord>,
    p: usize,
}

/// Checks every record invariant and reports all offending rows.
pub fn validate_dataset(records: Vec<ObservedRecord>) -> core::result::Result<Dataset, ValidationReport> {
    let mut violations = Vec::new();
    if records.is_empty() {
        violations.push(Violation {
            row: 0,
            rule: ValidationRule::Empty,
        });
        return Err(ValidationReport { violations });
    }
    let p = records[0].covariates.len();
    for (row, r) in records.iter().enumerate() {
        r.violations(row, p, &mut violations);
    }
    if violations.is_empty() {
        Ok(Dataset { records, p })
    } else {
        Err(ValidationReport { violations })
    }
}

impl Dataset {
    pub fn new(records: Vec<ObservedRecord>) -> Result<Self> {
        validate_dataset(records).map_err(Error::Validation)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension.
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn iter(&self) -> core::slice::Iter<'_, ObservedRecord> {
        self.records.iter()
    }

    pub fn into_records(self) -> Vec<ObservedRecord> {
        self.records
    }

    /// Rows at `indices`, repeats allowed (bootstrap).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            p: self.p,
        }
    }

    pub fn covariates(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.covariates.as_slice())
    }

    /// Observed event times of transition `g` (0-based): `Y1` for the
    /// non-terminal transition, `Y2` for direct terminal events and the
    /// sojourn `Y2 - Y1` for terminal events after the non-terminal one.
    pub fn event_times(&self, g: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.transition_events()[g])
            .map(|r| match g {
                0 => r.y1,
                1 => r.y2,
                _ => r.sojourn(),
            })
            .collect()
    }
}

impl core::ops::Index<usize> for Dataset {
    type Output = ObservedRecord;

    fn index(&self, i: usize) -> &ObservedRecord {
        &self.records[i]
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a ObservedRecord;
    type IntoIter = core::slice::Iter<'a, ObservedRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
