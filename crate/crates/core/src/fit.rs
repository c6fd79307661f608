//! Parameter estimation: randomized initial search followed by
//! Levenberg-Marquardt refinement of the least-squares objective
//! `sum_i (count_i - m(t_i))^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::gof::{self, Gof};
use crate::models::{self, ModelId, ParamVector};
use crate::series::FailureSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of candidates drawn by the initial search.
    pub search_budget: usize,
    pub rng_seed: u64,
    pub max_refine_iterations: usize,
    pub rss_rel_tol: f64,
    pub step_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            search_budget: 100_000,
            rng_seed: 42,
            max_refine_iterations: 1000,
            rss_rel_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.search_budget == 0 {
            return Err(FitError::Config("search_budget must be at least 1"));
        }
        if self.max_refine_iterations == 0 {
            return Err(FitError::Config("max_refine_iterations must be at least 1"));
        }
        if !(self.rss_rel_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(FitError::Config("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Why refinement stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Residuals vanished exactly.
    ZeroResidual,
    RssTolerance,
    StepTolerance,
    IterationLimit,
    /// Damping grew without finding a descent step.
    DampingExhausted,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(
            self,
            StopReason::ZeroResidual | StopReason::RssTolerance | StopReason::StepTolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub params: ParamVector,
    pub rss: f64,
    pub n: usize,
    pub k: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations_used: usize,
    pub gof: Gof,
}

impl FitResult {
    /// Fitted mean values at the given times.
    pub fn predict(&self, times: &[f64]) -> Vec<f64> {
        times
            .iter()
            .map(|&t| models::eval(self.model, self.params.values(), t))
            .collect()
    }
}

/// Outcome of one model inside a batch fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: ModelId,
    pub result: Result<FitResult, FitError>,
}

fn require_length(id: ModelId, series: &FailureSeries) -> Result<(), FitError> {
    let k = id.param_count();
    if series.len() < k + 1 {
        return Err(FitError::InsufficientData {
            needed: k + 1,
            got: series.len(),
        });
    }
    Ok(())
}

fn rss_of(id: ModelId, p: &[f64], times: &[f64], counts: &[f64]) -> f64 {
    times
        .iter()
        .zip(counts)
        .map(|(&t, &y)| {
            let r = y - models::eval(id, p, t);
            r * r
        })
        .sum()
}

/// Like [`rss_of`] but gives up once the partial sum exceeds `cutoff`.
fn rss_bounded(id: ModelId, p: &[f64], times: &[f64], counts: &[f64], cutoff: f64) -> f64 {
    let mut acc = 0.0;
    for (&t, &y) in times.iter().zip(counts) {
        let r = y - models::eval(id, p, t);
        acc += r * r;
        if acc > cutoff {
            return f64::INFINITY;
        }
    }
    acc
}

fn model_salt(id: ModelId) -> u64 {
    // Distinct, fixed stream per model so one seed drives all nine searches.
    0x9E37_79B9_7F4A_7C15u64.wrapping_mul(id as u64 + 1)
}

/// Draws `search_budget` candidates log-uniformly within the model's bounds
/// and returns the one with the smallest RSS.
///
/// Every model is linear in its first (scale) parameter, so each candidate's
/// scale is set to its least-squares optimum given the sampled shape
/// parameters, clamped to the scale bounds.
pub fn initial_search(
    id: ModelId,
    series: &FailureSeries,
    cfg: &FitConfig,
) -> Result<ParamVector, FitError> {
    cfg.validate()?;
    require_length(id, series)?;
    let bounds = id.descriptor().bounds(series.len());
    let log_bounds: Vec<(f64, f64)> = bounds.iter().map(|(lo, hi)| (lo.ln(), hi.ln())).collect();
    let times = series.times();
    let counts = series.counts();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ model_salt(id));
    let mut candidate = vec![0.0; bounds.len()];
    let mut shape = vec![0.0; times.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;

    for _ in 0..cfg.search_budget {
        for (c, (lo, hi)) in candidate.iter_mut().zip(&log_bounds) {
            *c = rng.gen_range(*lo..=*hi).exp();
        }
        candidate[0] = 1.0;
        let (mut sfy, mut sff) = (0.0, 0.0);
        for ((s, &t), &y) in shape.iter_mut().zip(times).zip(&counts) {
            *s = models::eval(id, &candidate, t);
            sfy += *s * y;
            sff += *s * *s;
        }
        let scale = if sff > 0.0 && sfy.is_finite() && sff.is_finite() {
            (sfy / sff).clamp(bounds[0].0, bounds[0].1)
        } else {
            bounds[0].1
        };
        candidate[0] = scale;
        let cutoff = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let rss = rss_bounded(id, &candidate, times, &counts, cutoff);
        if rss.is_finite() && best.as_ref().is_none_or(|b| rss < b.0) {
            best = Some((rss, candidate.clone()));
        }
    }

    match best {
        Some((_, p)) => Ok(ParamVector::new_unchecked(id, p)),
        None => Err(FitError::Numeric(id)),
    }
}

/// Jacobian row with a central-difference fallback for non-finite entries.
fn jacobian_row(id: ModelId, p: &[f64], t: f64, row: &mut [f64]) {
    models::eval_gradient(id, p, t, row);
    if row.iter().all(|g| g.is_finite()) {
        return;
    }
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-12);
        q[j] = p[j] + h;
        let up = models::eval(id, &q, t);
        q[j] = p[j] - h;
        let down = models::eval(id, &q, t);
        q[j] = p[j];
        let d = (up - down) / (2.0 * h);
        row[j] = if d.is_finite() { d } else { 0.0 };
    }
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for m in 0..i {
            s -= l[i * k + m] * y[m];
        }
        y[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for m in (i + 1)..k {
            s -= l[m * k + i] * x[m];
        }
        x[i] = s / l[i * k + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

const MU_INIT: f64 = 1e-3;
const MU_MAX: f64 = 1e16;

/// Levenberg-Marquardt minimization of the residual sum of squares.
///
/// Steps are projected onto the parameter bounds. The result never has a
/// larger RSS than `init`.
pub fn refine(
    id: ModelId,
    series: &FailureSeries,
    init: &ParamVector,
    cfg: &FitConfig,
) -> Result<FitResult, FitError> {
    cfg.validate()?;
    require_length(id, series)?;
    if init.model() != id {
        return Err(FitError::Config("initial parameters belong to a different model"));
    }
    id.descriptor().validate(init.values())?;

    let bounds = id.descriptor().bounds(series.len());
    let times = series.times();
    let counts = series.counts();
    let n = times.len();
    let k = bounds.len();

    let mut p = init.values().to_vec();
    let mut rss = rss_of(id, &p, times, &counts);
    if !rss.is_finite() {
        return Err(FitError::Numeric(id));
    }

    let mut mu = MU_INIT;
    let mut jac = vec![0.0; n * k];
    let mut residuals = vec![0.0; n];
    let mut iterations = 0;
    let mut stop = StopReason::IterationLimit;

    'outer: while iterations < cfg.max_refine_iterations {
        if rss == 0.0 {
            stop = StopReason::ZeroResidual;
            break;
        }
        iterations += 1;

        for i in 0..n {
            residuals[i] = counts[i] - models::eval(id, &p, times[i]);
            jacobian_row(id, &p, times[i], &mut jac[i * k..(i + 1) * k]);
        }
        let mut jtj = vec![0.0; k * k];
        let mut jtr = vec![0.0; k];
        for i in 0..n {
            let row = &jac[i * k..(i + 1) * k];
            for a in 0..k {
                jtr[a] += row[a] * residuals[i];
                for b in 0..=a {
                    jtj[a * k + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                jtj[b * k + a] = jtj[a * k + b];
            }
        }
        let diag: Vec<f64> = (0..k).map(|a| jtj[a * k + a].max(1e-300)).collect();

        // Inner loop: raise damping until a step lowers the RSS.
        loop {
            let mut damped = jtj.clone();
            for a in 0..k {
                damped[a * k + a] += mu * diag[a];
            }
            let Some(delta) = cholesky_solve(&damped, &jtr, k) else {
                mu *= 10.0;
                if mu > MU_MAX {
                    stop = StopReason::DampingExhausted;
                    break 'outer;
                }
                continue;
            };

            let trial: Vec<f64> = p
                .iter()
                .zip(&delta)
                .zip(&bounds)
                .map(|((v, d), (lo, hi))| (v + d).clamp(*lo, *hi))
                .collect();
            let step_norm = norm(trial.iter().zip(&p).map(|(a, b)| a - b));
            let p_norm = norm(p.iter().copied());
            let small_step = step_norm <= cfg.step_tol * (p_norm + cfg.step_tol);

            let trial_rss = rss_of(id, &trial, times, &counts);
            if trial_rss.is_finite() && trial_rss < rss {
                // Predicted reduction of the linearized model.
                let jd: f64 = (0..k).map(|a| delta[a] * jtr[a]).sum();
                let predicted = (2.0 * jd - quad_form(&jtj, &delta, k)).max(0.0);
                let actual = rss - trial_rss;
                p = trial;
                rss = trial_rss;
                mu = (mu / 10.0).max(1e-15);
                if rss == 0.0 {
                    stop = StopReason::ZeroResidual;
                    break 'outer;
                }
                if actual <= cfg.rss_rel_tol * (rss + actual)
                    && predicted <= cfg.rss_rel_tol * (rss + actual)
                {
                    stop = StopReason::RssTolerance;
                    break 'outer;
                }
                if small_step {
                    stop = StopReason::StepTolerance;
                    break 'outer;
                }
                break;
            }
            if small_step {
                stop = StopReason::StepTolerance;
                break 'outer;
            }
            mu *= 10.0;
            if mu > MU_MAX {
                stop = StopReason::DampingExhausted;
                break 'outer;
            }
        }
    }

    let fitted: Vec<f64> = times.iter().map(|&t| models::eval(id, &p, t)).collect();
    if fitted.iter().any(|v| !v.is_finite()) {
        return Err(FitError::Numeric(id));
    }
    let gof = gof::score(&counts, &fitted, k)?;
    Ok(FitResult {
        model: id,
        params: ParamVector::new_unchecked(id, p),
        rss,
        n,
        k,
        converged: stop.converged(),
        stop_reason: stop,
        iterations_used: iterations,
        gof,
    })
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

fn quad_form(m: &[f64], x: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..k {
        for b in 0..k {
            s += x[a] * m[a * k + b] * x[b];
        }
    }
    s
}

/// Initial search followed by refinement for a single model.
pub fn fit_model(
    id: ModelId,
    series: &FailureSeries,
    cfg: &FitConfig,
) -> Result<FitResult, FitError> {
    let init = initial_search(id, series, cfg)?;
    refine(id, series, &init, cfg)
}

/// Fits every requested model, concurrently, returning one outcome per
/// distinct model ordered by [`ModelId`].
pub fn fit_all(
    series: &FailureSeries,
    models: &[ModelId],
    cfg: &FitConfig,
) -> Result<Vec<FitOutcome>, FitError> {
    if models.is_empty() {
        return Err(FitError::NoModels);
    }
    cfg.validate()?;
    let mut ids = models.to_vec();
    ids.sort();
    ids.dedup();
    Ok(ids
        .par_iter()
        .map(|&model| FitOutcome {
            model,
            result: fit_model(model, series, cfg),
        })
        .collect())
}
