//! Spectral simulation of kernel operator learning between Sobolev RKHSs.
//!
//! Operators are represented by their coefficients in the orthonormal
//! eigenbases of the input and output covariances, truncated to
//! `D_out × D_in`. On top of that representation the crate provides
//! synthetic data, the variance-contour, bias-contour and multilevel
//! regularization schedules, the row-wise ridge estimators, closed-form
//! population oracles and an experiment harness for convergence-rate sweeps.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod oracle;
pub mod schedules;
pub mod spectral;
pub mod synth;

pub use config::{ExperimentConfig, GroundTruth};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, LambdaMap};
pub use harness::{fit_rate, run_convergence, Experiment, ExperimentPlan, RateReport};
pub use schedules::{multilevel_schedule, LevelSchedule};
pub use spectral::{bg_norm, EigenDecay, OperatorMatrix, ProblemConfig};
pub use synth::{make_dataset, NoiseProfile, SampleSet};
