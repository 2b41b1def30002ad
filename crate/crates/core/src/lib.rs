//! Certifying quantum steering from phase-estimation precision with finite resources.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bounds;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod information;
pub mod priors;
pub mod qubit_model;
pub mod rng;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use estimation::{EstimationResult, Estimator, GeneratorEstimate};
pub use experiment::{EnsembleRow, ExperimentOutcome, Pipeline, PipelineConfig};
pub use priors::{JointPrior, PhasePrior, VisibilityPrior};
pub use simulator::{CountRecord, ExperimentConfig, GeneratorCounts, PhaseCounts, SettingSchedule};
pub use steering_test::{TestConfig, TestResult};
