//! Experiment runner for `lowmem-experts`: config files, exact regret
//! against brute-force best experts, invariant checking, CSV traces and the
//! matching-pennies demonstration.

pub mod checks;
pub mod config;
pub mod demo;
pub mod error;
pub mod experiment;
pub mod regret;

pub use checks::{CheckLevel, Violation};
pub use config::{DemoConfig, DemoLearner, ExperimentConfig, LearnerSpec};
pub use demo::{run_lowerbound_demo, DemoReport, DemoTrial};
pub use error::BenchError;
pub use experiment::{run_experiment, run_trial, ExperimentReport, Summary, TrialMode, TrialResult};
pub use regret::{oracle_best_expert, RegretTrace, TraceRow};
