use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Ordered failure times (days since observation start) with the cumulative
/// count `i` implied at `times[i - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSeries {
    label: String,
    times: Vec<f64>,
    horizon: f64,
}

impl FailureSeries {
    pub fn new(label: impl Into<String>, times: Vec<f64>, horizon: f64) -> Result<Self, DataError> {
        if times.is_empty() {
            return Err(DataError::EmptySeries);
        }
        if times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(DataError::InvalidSeries("failure times must be positive".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(DataError::InvalidSeries("failure times must be nondecreasing".into()));
        }
        let last = *times.last().unwrap();
        if !horizon.is_finite() || horizon < last {
            return Err(DataError::InvalidSeries(format!(
                "horizon {horizon} precedes last failure time {last}"
            )));
        }
        Ok(FailureSeries {
            label: label.into(),
            times,
            horizon,
        })
    }

    /// Series whose horizon is its last failure time.
    pub fn from_times(label: impl Into<String>, times: Vec<f64>) -> Result<Self, DataError> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(label, times, horizon)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Cumulative counts `1..=n`, aligned with `times`.
    pub fn counts(&self) -> Vec<f64> {
        (1..=self.times.len()).map(|i| i as f64).collect()
    }
}
