//! Software reliability growth model (SRGM) analysis.
//!
//! Fits nine NHPP mean value functions to cumulative defect data mined from
//! issue trackers, scores the fits with R², AIC, BIC and RSE, and compares
//! model performance across groups of series with rank-based statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fetch;
pub mod fit;
pub mod gof;
pub mod models;
pub mod report;
pub mod series;
pub mod special;
pub mod stats;
pub mod trend;

pub use data::{
    build_series, classify_attribute, filter_defects, parse_issues, segment_releases,
    AttributeMetric, DefectFilter, IssueRecord, ProjectAttributes, ReleaseWindow, SizeClass,
};
pub use error::{DataError, FetchError, FitError, ModelError, StatsError};
pub use fit::{fit_all, fit_model, initial_search, refine, FitConfig, FitOutcome, FitResult};
pub use gof::{aic, bic, r_squared, rse, Gof, Metric};
pub use models::{classify, gradient, mean_value, ModelDescriptor, ModelId, ParamVector, ShapeClass};
pub use series::FailureSeries;
pub use stats::{
    compare_groups, dunn_posthoc, eta_squared, inter_rater_agreement, kruskal_wallis,
    rank_models, EffectSize, GroupComparison, RankingTable,
};
pub use trend::{laplace_factor, TrendResult};
