//! Python bindings: model evaluation, fitting, trend and rank statistics.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use srgm_core::data::{self, AttributeMetric, DefectFilter};
use srgm_core::models::ModelId;
use srgm_core::stats::{self, MetricSample};
use srgm_core::{fit as core_fit, trend, FailureSeries, FitConfig, Metric};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model(code: &str) -> PyResult<ModelId> {
    code.parse().map_err(err)
}

fn series(times: Vec<f64>, horizon: Option<f64>) -> PyResult<FailureSeries> {
    match horizon {
        Some(h) => FailureSeries::new("series", times, h),
        None => FailureSeries::from_times("series", times),
    }
    .map_err(err)
}

/// Codes of all supported models.
#[pyfunction]
fn models() -> Vec<&'static str> {
    ModelId::ALL.iter().map(|m| m.code()).collect()
}

/// Parameter names and shape class of a model.
#[pyfunction]
fn describe<'py>(py: Python<'py>, code: &str) -> PyResult<Bound<'py, PyDict>> {
    let d = model(code)?.descriptor();
    let out = PyDict::new(py);
    out.set_item("model", d.id.code())?;
    out.set_item("name", d.id.full_name())?;
    out.set_item("shape", d.shape.as_str())?;
    out.set_item("params", d.param_names.to_vec())?;
    Ok(out)
}

#[pyfunction]
fn mean_value(code: &str, params: Vec<f64>, t: f64) -> PyResult<f64> {
    srgm_core::mean_value(model(code)?, &params, t).map_err(err)
}

#[pyfunction]
fn gradient(code: &str, params: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    srgm_core::gradient(model(code)?, &params, t).map_err(err)
}

/// Outcome of fitting one model to one series.
#[pyclass(frozen, name = "FitResult")]
struct PyFitResult {
    inner: core_fit::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model.code()
    }
    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.values().to_vec()
    }
    #[getter]
    fn rss(&self) -> f64 {
        self.inner.rss
    }
    #[getter]
    fn r2(&self) -> f64 {
        self.inner.gof.r2
    }
    #[getter]
    fn aic(&self) -> f64 {
        self.inner.gof.aic
    }
    #[getter]
    fn bic(&self) -> f64 {
        self.inner.gof.bic
    }
    #[getter]
    fn rse(&self) -> f64 {
        self.inner.gof.rse
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
    #[getter]
    fn stop_reason(&self) -> String {
        format!("{:?}", self.inner.stop_reason)
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations_used
    }

    /// Fitted mean value function at each time.
    fn predict(&self, times: Vec<f64>) -> Vec<f64> {
        self.inner.predict(&times)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(model={}, params={:?}, r2={:.6}, converged={})",
            self.inner.model, self.inner.params.values(), self.inner.gof.r2, self.inner.converged
        )
    }
}

fn config(seed: u64, budget: usize) -> FitConfig {
    FitConfig {
        rng_seed: seed,
        search_budget: budget,
        ..FitConfig::default()
    }
}

/// Fits one model to cumulative failure times.
#[pyfunction]
#[pyo3(signature = (code, times, horizon=None, seed=42, budget=100_000))]
fn fit(
    py: Python<'_>,
    code: &str,
    times: Vec<f64>,
    horizon: Option<f64>,
    seed: u64,
    budget: usize,
) -> PyResult<PyFitResult> {
    let id = model(code)?;
    let s = series(times, horizon)?;
    let cfg = config(seed, budget);
    let inner = py.detach(|| core_fit::fit_model(id, &s, &cfg)).map_err(err)?;
    Ok(PyFitResult { inner })
}

/// Fits several models (default: all) and returns `{code: FitResult | error message}`.
#[pyfunction]
#[pyo3(signature = (times, models=None, horizon=None, seed=42, budget=100_000))]
fn fit_all<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    models: Option<Vec<String>>,
    horizon: Option<f64>,
    seed: u64,
    budget: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let ids = match models {
        Some(codes) => codes.iter().map(|c| model(c)).collect::<PyResult<Vec<_>>>()?,
        None => ModelId::ALL.to_vec(),
    };
    let s = series(times, horizon)?;
    let cfg = config(seed, budget);
    let outcomes = py.detach(|| core_fit::fit_all(&s, &ids, &cfg)).map_err(err)?;
    let out = PyDict::new(py);
    for o in outcomes {
        match o.result {
            Ok(inner) => out.set_item(o.model.code(), PyFitResult { inner })?,
            Err(e) => out.set_item(o.model.code(), e.to_string())?,
        }
    }
    Ok(out)
}

/// Laplace trend test; returns `{u, n, horizon, growth_significant}`.
#[pyfunction]
fn laplace<'py>(py: Python<'py>, times: Vec<f64>, horizon: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = trend::laplace_test(&times, horizon).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("u", r.u)?;
    out.set_item("n", r.n)?;
    out.set_item("horizon", r.horizon)?;
    out.set_item("growth_significant", r.growth_significant)?;
    Ok(out)
}

/// Kruskal-Wallis `(H, p)`.
#[pyfunction]
fn kruskal_wallis(groups: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    stats::kruskal_wallis(&groups).map_err(err)
}

/// Bonferroni-adjusted Dunn p-values as a symmetric matrix.
#[pyfunction]
fn dunn(groups: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    stats::dunn_posthoc(&groups).map_err(err)
}

/// `(eta^2, label)` for a Kruskal-Wallis result.
#[pyfunction]
fn eta_squared(h: f64, k: usize, n: usize) -> PyResult<(f64, &'static str)> {
    let (eta, effect) = stats::eta_squared(h, k, n).map_err(err)?;
    Ok((eta, effect.as_str()))
}

/// Kruskal-Wallis, effect size and Dunn matrix for labelled groups.
#[pyfunction]
fn compare_groups<'py>(
    py: Python<'py>,
    labels: Vec<String>,
    groups: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let c = stats::compare_groups(labels, groups).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("h", c.h)?;
    out.set_item("df", c.df)?;
    out.set_item("p_value", c.p_value)?;
    out.set_item("n", c.n)?;
    out.set_item("eta_squared", c.eta_squared)?;
    out.set_item("effect", c.effect.map(|e| e.as_str()))?;
    out.set_item("dunn", c.dunn_matrix())?;
    out.set_item("labels", c.group_labels)?;
    Ok(out)
}

/// Ranks models per segment by the mean of a metric.
///
/// `samples` are `(segment, model, value)` triples. Returns
/// `{segments, models, ranks, ira_percent}`; `ranks[s][m]` is 1 for the best.
#[pyfunction]
#[pyo3(signature = (samples, metric="r2"))]
fn rank_models<'py>(
    py: Python<'py>,
    samples: Vec<(String, String, f64)>,
    metric: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let metric: Metric = metric.parse().map_err(err)?;
    let samples = samples
        .into_iter()
        .map(|(segment, code, v)| {
            let mut gof = srgm_core::Gof { r2: 0.0, aic: 0.0, bic: 0.0, rse: 0.0 };
            match metric {
                Metric::R2 => gof.r2 = v,
                Metric::Aic => gof.aic = v,
                Metric::Bic => gof.bic = v,
                Metric::Rse => gof.rse = v,
            }
            Ok(MetricSample { segment, model: model(&code)?, gof })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let t = stats::rank_models(&samples, metric, None).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("segments", t.segments.clone())?;
    out.set_item("models", t.models.iter().map(|m| m.code()).collect::<Vec<_>>())?;
    out.set_item("ranks", t.ranks.clone())?;
    out.set_item("ira_percent", t.ira_percent)?;
    Ok(out)
}

/// Size class (`S`, `M`, `L`) of a project attribute value.
#[pyfunction]
fn classify_attribute(metric: &str, value: u64) -> PyResult<&'static str> {
    let m: AttributeMetric = metric.parse().map_err(err)?;
    Ok(data::classify_attribute(m, value).as_str())
}

/// Parses an issue export and keeps defect reports.
///
/// Returns `(times_in_days, kept, skipped)` where times are measured from
/// the earliest kept issue.
#[pyfunction]
#[pyo3(signature = (document, title_match=false))]
fn defect_times(document: &str, title_match: bool) -> PyResult<(Vec<f64>, usize, usize)> {
    let parsed = data::parse_issues(document.as_bytes()).map_err(err)?;
    let filter = DefectFilter {
        match_titles: title_match,
        ..DefectFilter::default()
    };
    let kept = data::filter_defects(&parsed.records, &filter);
    let times = if kept.is_empty() {
        Vec::new()
    } else {
        data::build_series("issues", &kept, None).map_err(err)?.times().to_vec()
    };
    Ok((times, kept.len(), parsed.skipped.len()))
}

#[pymodule]
fn srgm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(models, m)?)?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    m.add_function(wrap_pyfunction!(mean_value, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_all, m)?)?;
    m.add_function(wrap_pyfunction!(laplace, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(dunn, m)?)?;
    m.add_function(wrap_pyfunction!(eta_squared, m)?)?;
    m.add_function(wrap_pyfunction!(compare_groups, m)?)?;
    m.add_function(wrap_pyfunction!(rank_models, m)?)?;
    m.add_function(wrap_pyfunction!(classify_attribute, m)?)?;
    m.add_function(wrap_pyfunction!(defect_times, m)?)?;
    Ok(())
}
