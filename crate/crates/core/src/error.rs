use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    Validation(ValidationReport),
    #[error("zero baseline hazard at an observed transition-{transition} event (subject {subject})")]
    NonFiniteLikelihood { subject: usize, transition: usize },
    #[error("Q is not finite: zero jump at an observed transition-{transition} event (subject {subject})")]
    NonFiniteQ { subject: usize, transition: usize },
    #[error("empty risk set at t={time} for transition {transition}")]
    EmptyRiskSet { transition: usize, time: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("optimizer failed after {iterations} iterations ({reason}); gradient norm {gradient_norm:e}")]
    OptimizerFailure {
        iterations: usize,
        reason: &'static str,
        gradient_norm: f64,
    },
    #[error("censoring survival estimate is zero at t={time}")]
    ZeroWeight { time: f64 },
    #[error("{n} subjects cannot be split into {folds} folds")]
    FoldTooSmall { n: usize, folds: usize },
    #[error("argument outside domain: {0}")]
    Domain(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{failed} of {total} refits failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// Errors caused by bad input data rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::DimensionMismatch { .. }
                | Error::FoldTooSmall { .. }
                | Error::InvalidConfig(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationRule {
    NonPositiveTime,
    WedgeViolation,
    IndicatorInconsistency,
    ZeroSojourn,
    RaggedCovariates,
    NonFiniteCovariate,
    Empty,
}

impl fmt::Display for ValidationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValidationRule::NonPositiveTime => "non-positive or non-finite time",
            ValidationRule::WedgeViolation => "y1 > y2",
            ValidationRule::IndicatorInconsistency => "delta1 = 0 but y1 != y2",
            ValidationRule::ZeroSojourn => "both events observed at the same time",
            ValidationRule::RaggedCovariates => "covariate length differs from row 0",
            ValidationRule::NonFiniteCovariate => "non-finite covariate",
            ValidationRule::Empty => "dataset is empty",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub row: usize,
    pub rule: ValidationRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn rows(&self, rule: ValidationRule) -> impl Iterator<Item = usize> + '_ {
        self.violations
            .iter()
            .filter(move |v| v.rule == rule)
            .map(|v| v.row)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(10) {
            write!(f, "; row {}: {}", v.row, v.rule)?;
        }
        if self.violations.len() > 10 {
            write!(f, "; ...")?;
        }
        Ok(())
    }
}
