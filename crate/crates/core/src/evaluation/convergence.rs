//! Running-mean convergence check for Gibbs traces.

use serde::{Deserialize, Serialize};

use super::stats::mean_sd;
use crate::error::{Error, Result};

/// Compares the cumulative mean of the trace from `start` onward at its
/// end with the same mean `window` iterations earlier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    /// Iterations discarded before the running mean starts.
    pub start: usize,
    pub window: usize,
    /// Allowed drift in units of the trace's standard deviation.
    pub tolerance: f64,
}

impl Default for StabilityCheck {
    fn default() -> Self {
        StabilityCheck {
            start: 500,
            window: 1000,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Drift of the running mean over the last window, in sds.
    pub drift: f64,
    pub stabilized: bool,
    /// Mean and sd of the trace from `start` on.
    pub mean: f64,
    pub sd: f64,
}

pub fn running_mean_stability(trace: &[f64], check: &StabilityCheck) -> Result<StabilityReport> {
    if trace.len() < check.start + check.window + 2 {
        return Err(Error::InvalidArgument(format!(
            "trace of length {} is too short for start {} and window {}",
            trace.len(),
            check.start,
            check.window
        )));
    }
    let kept = &trace[check.start..];
    let (mean, sd) = mean_sd(kept);
    let earlier = &kept[..kept.len() - check.window];
    let earlier_mean = earlier.iter().sum::<f64>() / earlier.len() as f64;
    let drift = if sd > 0.0 { (mean - earlier_mean).abs() / sd } else { 0.0 };
    Ok(StabilityReport {
        drift,
        stabilized: drift < check.tolerance,
        mean,
        sd,
    })
}
