use thiserror::Error;

use crate::models::ModelId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model identifier `{0}`")]
    UnknownModel(String),
    #[error("{model} takes {expected} parameters, got {got}")]
    Arity {
        model: ModelId,
        expected: usize,
        got: usize,
    },
    #[error("{model} parameter {param} = {value} is outside its domain")]
    Domain {
        model: ModelId,
        param: &'static str,
        value: f64,
    },
    #[error("time must be finite and nonnegative, got {0}")]
    Time(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("insufficient data: {needed} points required, {got} available")]
    InsufficientData { needed: usize, got: usize },
    #[error("observed values are constant; R-squared is undefined")]
    DegenerateData,
    #[error("length mismatch: {0} observed vs {1} fitted values")]
    LengthMismatch(usize, usize),
    #[error("non-finite residual encountered while fitting {0}")]
    Numeric(ModelId),
    #[error("model list is empty")]
    NoModels,
    #[error("invalid fit configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model {model} has no results in segment `{segment}`")]
    CoverageGap { model: ModelId, segment: String },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("no issues fall inside the requested scope")]
    EmptySeries,
    #[error("invalid failure series: {0}")]
    InvalidSeries(String),
    #[error("invalid release window `{name}`: {reason}")]
    InvalidWindow { name: String, reason: String },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("repository `{0}` not found")]
    UnknownRepo(String),
    #[error("rate limit exhausted; retry after {retry_after_secs} s")]
    RetryAfter { retry_after_secs: u64 },
    #[error("network error: {0}")]
    Network(String),
    #[error("unexpected HTTP status {status} from {url}")]
    Status { status: u16, url: String },
    #[error("invalid response payload: {0}")]
    Payload(String),
}
