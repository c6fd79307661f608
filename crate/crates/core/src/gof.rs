//! Goodness-of-fit metrics for least-squares fits.
//!
//! AIC and BIC use the Gaussian least-squares form with `k + 1` effective
//! parameters (the model parameters plus the error variance):
//!
//! ```text
//! AIC = n ln(RSS / n) + 2 (k + 1)
//! BIC = n ln(RSS / n) + (k + 1) ln n
//! ```
//!
//! RSS is floored at [`RSS_FLOOR`] inside the logarithm so a perfect fit
//! still yields a finite score.

use serde::{Deserialize, Serialize};

use crate::error::FitError;

pub const RSS_FLOOR: f64 = 1e-12;

/// Description of the AIC/BIC variant, recorded in report metadata.
pub const AIC_BIC_VARIANT: &str =
    "gaussian-ls: AIC = n*ln(max(RSS,1e-12)/n) + 2(k+1); BIC = n*ln(max(RSS,1e-12)/n) + (k+1)*ln(n)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gof {
    pub r2: f64,
    pub aic: f64,
    pub bic: f64,
    pub rse: f64,
}

/// Metric used for ranking and group comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    R2,
    Aic,
    Bic,
    Rse,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::R2, Metric::Aic, Metric::Bic, Metric::Rse];

    pub fn of(self, gof: &Gof) -> f64 {
        match self {
            Metric::R2 => gof.r2,
            Metric::Aic => gof.aic,
            Metric::Bic => gof.bic,
            Metric::Rse => gof.rse,
        }
    }

    /// R-squared is better when larger; the others when smaller.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::R2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::R2 => "r2",
            Metric::Aic => "aic",
            Metric::Bic => "bic",
            Metric::Rse => "rse",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "r2" | "r-squared" => Ok(Metric::R2),
            "aic" => Ok(Metric::Aic),
            "bic" => Ok(Metric::Bic),
            "rse" => Ok(Metric::Rse),
            other => Err(format!("unknown metric `{other}` (expected r2, aic, bic or rse)")),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn r_squared(observed: &[f64], fitted: &[f64]) -> Result<f64, FitError> {
    if observed.len() != fitted.len() {
        return Err(FitError::LengthMismatch(observed.len(), fitted.len()));
    }
    if observed.len() < 2 {
        return Err(FitError::InsufficientData {
            needed: 2,
            got: observed.len(),
        });
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(FitError::DegenerateData);
    }
    let ss_res: f64 = observed
        .iter()
        .zip(fitted)
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn check(rss: f64, n: usize, k: usize) -> Result<(), FitError> {
    if n <= k || k == 0 {
        return Err(FitError::InsufficientData { needed: k + 1, got: n });
    }
    if !(rss >= 0.0) {
        return Err(FitError::Config("rss must be nonnegative"));
    }
    Ok(())
}

fn log_likelihood_term(rss: f64, n: usize) -> f64 {
    n as f64 * (rss.max(RSS_FLOOR) / n as f64).ln()
}

pub fn aic(rss: f64, n: usize, k: usize) -> Result<f64, FitError> {
    check(rss, n, k)?;
    Ok(log_likelihood_term(rss, n) + 2.0 * (k + 1) as f64)
}

pub fn bic(rss: f64, n: usize, k: usize) -> Result<f64, FitError> {
    check(rss, n, k)?;
    Ok(log_likelihood_term(rss, n) + (k + 1) as f64 * (n as f64).ln())
}

pub fn rse(rss: f64, n: usize, k: usize) -> Result<f64, FitError> {
    check(rss, n, k)?;
    Ok((rss / (n - k) as f64).sqrt())
}

/// All four metrics for a fit with `k` parameters.
pub fn score(observed: &[f64], fitted: &[f64], k: usize) -> Result<Gof, FitError> {
    let r2 = r_squared(observed, fitted)?;
    let rss: f64 = observed
        .iter()
        .zip(fitted)
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    let n = observed.len();
    Ok(Gof {
        r2,
        aic: aic(rss, n, k)?,
        bic: bic(rss, n, k)?,
        rse: rse(rss, n, k)?,
    })
}
