//! Laplace trend test on failure times.

use serde::{Deserialize, Serialize};

use crate::error::StatsError;
use crate::series::FailureSeries;

/// Two-sided 5% critical value of the standard normal.
pub const LAPLACE_CRITICAL: f64 = 1.96;

pub const LAPLACE_VARIANT: &str =
    "event-time: u = (mean(t_i) - T/2) / (T * sqrt(1/(12n))); growth when u < -1.96";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub u: f64,
    pub n: usize,
    pub horizon: f64,
    /// Significant reliability growth (decreasing failure intensity).
    pub growth_significant: bool,
}

/// Laplace factor of failure times observed on `(0, horizon]`.
pub fn laplace_test(times: &[f64], horizon: f64) -> Result<TrendResult, StatsError> {
    let n = times.len();
    if n < 2 {
        return Err(StatsError::InsufficientData(format!(
            "Laplace test needs at least 2 failures, got {n}"
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(StatsError::InsufficientData(format!(
            "observation horizon must be positive, got {horizon}"
        )));
    }
    if times.iter().any(|&t| !(t > 0.0 && t <= horizon)) {
        return Err(StatsError::InvalidArgument(
            "failure times must lie in (0, horizon]".into(),
        ));
    }
    let mean = times.iter().sum::<f64>() / n as f64;
    let u = (mean - horizon / 2.0) / (horizon * (1.0 / (12.0 * n as f64)).sqrt());
    Ok(TrendResult {
        u,
        n,
        horizon,
        growth_significant: u < -LAPLACE_CRITICAL,
    })
}

pub fn laplace_factor(series: &FailureSeries) -> Result<TrendResult, StatsError> {
    laplace_test(series.times(), series.horizon())
}
