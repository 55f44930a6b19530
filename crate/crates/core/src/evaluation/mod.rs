//! Calibration, utility, and convergence evaluation.

pub mod convergence;
pub mod experiment;
pub mod stats;

pub use convergence::{running_mean_stability, StabilityCheck, StabilityReport};
pub use experiment::{
    calibration_trial, nonprivate_posterior, run_experiment, run_traces, BoundsPolicy, CalibrationRecord,
    CellSummary, ExperimentConfig, ExperimentResults, Method, TraceConfig, UtilityRecord,
};
pub use stats::{empirical_quantile, ks_uniform, median, mmd2_unbiased, KsResult};
