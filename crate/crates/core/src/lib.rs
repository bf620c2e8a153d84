//! Neural expectation-maximization for semi-competing risks.
//!
//! The illness-death model links three transition hazards (event-free to
//! non-terminal, event-free to terminal, non-terminal to terminal) through a
//! shared gamma frailty with mean one and variance `theta`. Cumulative baseline
//! hazards are estimated nonparametrically as step functions, the log-risk
//! functions by small feed-forward networks, and the frailty variance as a
//! trainable scalar.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line, and parallel runners live in the `semicomp` companion crate.

#![no_std]

extern crate alloc;

pub mod data;
pub mod em;
pub mod error;
pub mod harness;
pub mod hazard;
pub mod likelihood;
pub mod math;
pub mod metrics;
pub mod neural;
pub mod optim;
pub mod posterior;
pub mod risk;
pub mod rng;
pub mod sim;
pub mod weibull;

pub use data::{validate_dataset, Dataset, ObservationCase, ObservedRecord};
pub use em::{run_em, EmConfig, EmFit, QValue, RiskSpec, TraceRow};
pub use error::{Error, ValidationReport, ValidationRule, Violation};
pub use hazard::{Baseline, StepHazard, WeibullHazard};
pub use likelihood::ModelState;
pub use metrics::{BbsCurve, CensoringCurve};
pub use neural::{RiskNetwork, TrainConfig};
pub use posterior::FrailtyPosterior;
pub use risk::{LinearRisk, NeuralRisk, RiskKind, RiskModel};
pub use sim::{SimConfig, SimulatedData};
pub use weibull::ParametricModel;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Number of transitions in the illness-death model.
pub const TRANSITIONS: usize = 3;
