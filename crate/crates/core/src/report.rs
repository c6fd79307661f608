//! Orchestration behind the `srgm` command line: ingest, trend, fit,
//! compare and rank, with CSV/JSON report writers and readers.
//!
//! Floating point values are written with 17 significant digits so every
//! number in a report parses back to the exact library value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    self, AttributeMetric, DefectFilter, DroppedWindow, IssueRecord, ProjectAttributes,
    ReleaseWindow, SkipNote,
};
use crate::error::{DataError, FetchError, StatsError};
use crate::fit::{self, FitConfig, FitResult};
use crate::gof::{self, Gof, Metric};
use crate::models::ModelId;
use crate::series::FailureSeries;
use crate::stats::{self, GroupComparison, MetricSample, RankingTable};
use crate::trend::{self, TrendResult};

pub const TOOL_NAME: &str = "srgm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TIME_UNIT: &str = "fractional days since observation start";
/// Smallest series any model can be fitted to (three parameters plus one).
pub const MIN_SERIES_LEN: usize = 4;

/// Written next to the filtered issues; the leading underscore keeps it out
/// of directory scans for issue files.
pub const INGEST_SUMMARY: &str = "_summary.json";

pub const GOF_HEADER: [&str; 11] = [
    "series", "model", "a", "b", "c", "rss", "r2", "aic", "bic", "rse", "converged",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Precondition(String),
}

impl CliError {
    /// 2 for unusable input, 3 when the analysis preconditions fail.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Precondition(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FetchError> for CliError {
    fn from(e: FetchError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Exact decimal rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| format!("invalid number `{s}`: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupBy {
    /// One series per project, all in one segment.
    Whole,
    /// One series per (project, release window).
    Releases,
    /// Segment projects by category.
    Domain,
    /// Segment projects by size class of an attribute.
    Attribute(AttributeMetric),
}

impl GroupBy {
    fn needs_attributes(self) -> bool {
        matches!(self, GroupBy::Domain | GroupBy::Attribute(_))
    }
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whole" => Ok(GroupBy::Whole),
            "releases" => Ok(GroupBy::Releases),
            "domain" => Ok(GroupBy::Domain),
            other => match other.strip_prefix("attribute:") {
                Some(m) => m.parse().map(GroupBy::Attribute),
                None => Err(format!(
                    "unknown grouping `{s}` (expected whole, releases, domain or attribute:LOC|NOC|NOI|NOFA)"
                )),
            },
        }
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupBy::Whole => f.write_str("whole"),
            GroupBy::Releases => f.write_str("releases"),
            GroupBy::Domain => f.write_str("domain"),
            GroupBy::Attribute(m) => write!(f, "attribute:{m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { csv: true, json: true }
    }
}

impl FromStr for Formats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut f = Formats { csv: false, json: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "csv" => f.csv = true,
                "json" => f.json = true,
                other => return Err(format!("unknown format `{other}` (expected csv, json)")),
            }
        }
        if !f.csv && !f.json {
            return Err("at least one output format required".into());
        }
        Ok(f)
    }
}

/// Issues of one project; the name is the input file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub name: String,
    pub issues: Vec<IssueRecord>,
    pub skipped: Vec<SkipNote>,
}

fn issue_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let meta = fs::metadata(path).map_err(|e| io_err(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| io_err(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && !p
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with('_'))
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("json") | Some("ndjson") | Some("jsonl")
                )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn project_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "project".into())
}

/// Reads every issue file (or directory of `.json`/`.ndjson`/`.jsonl` files,
/// ignoring names starting with `_`) into projects, sorted by
/// name. Project names must be unique.
pub fn load_projects(paths: &[PathBuf]) -> Result<Vec<Project>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("at least one --issues path is required".into()));
    }
    let mut projects = Vec::new();
    for path in paths {
        for file in issue_files(path)? {
            let bytes = fs::read(&file).map_err(|e| io_err(&file, e))?;
            let parsed = data::parse_issues(&bytes).map_err(|e| io_err(&file, e))?;
            projects.push(Project {
                name: project_name(&file),
                issues: parsed.records,
                skipped: parsed.skipped,
            });
        }
    }
    projects.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = projects.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(CliError::Input(format!("duplicate project name `{}`", w[0].name)));
    }
    Ok(projects)
}

pub fn load_releases(path: &Path) -> Result<Vec<ReleaseWindow>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(data::read_releases(file, &path.display().to_string())?)
}

pub fn load_attributes(path: &Path) -> Result<BTreeMap<String, ProjectAttributes>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let rows = data::read_attributes(file, &path.display().to_string())?;
    let mut map = BTreeMap::new();
    for row in rows {
        let name = row.project.clone();
        if map.insert(name.clone(), row).is_some() {
            return Err(CliError::Input(format!("{}: duplicate project `{name}`", path.display())));
        }
    }
    Ok(map)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable report");
    v.push(b'\n');
    v
}

/// File-system safe rendering of a series label.
pub fn file_stem_for(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub project: String,
    pub total: usize,
    pub parsed: usize,
    pub skipped: Vec<SkipNote>,
    pub kept: usize,
}

/// Filters each project's issues down to defect reports and writes
/// `<out>/<project>.ndjson` plus `<out>/_summary.json`.
pub fn run_ingest(
    projects: &[Project],
    filter: &DefectFilter,
    out: &Path,
) -> Result<Vec<IngestSummary>, CliError> {
    create_dir(out)?;
    let mut summaries = Vec::with_capacity(projects.len());
    for p in projects {
        let kept = data::filter_defects(&p.issues, filter);
        let mut buf = Vec::new();
        data::write_issues(&kept, &mut buf)?;
        write_file(&out.join(format!("{}.ndjson", p.name)), &buf)?;
        summaries.push(IngestSummary {
            project: p.name.clone(),
            total: p.issues.len() + p.skipped.len(),
            parsed: p.issues.len(),
            skipped: p.skipped.clone(),
            kept: kept.len(),
        });
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'a str,
        version: &'a str,
        filter: &'a DefectFilter,
        projects: &'a [IngestSummary],
    }
    write_file(
        &out.join(INGEST_SUMMARY),
        &json_bytes(&Doc {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            filter,
            projects: &summaries,
        }),
    )?;
    Ok(summaries)
}

// ---------------------------------------------------------------- series

/// A series scheduled for analysis and the segment it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub project: String,
    pub segment: String,
    pub series: FailureSeries,
}

/// Series-level or model-level reason for not reporting a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub series: String,
    pub model: Option<ModelId>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesPlan {
    pub series: Vec<SeriesSpec>,
    pub skipped: Vec<SkipRecord>,
}

/// Builds the series for a grouping mode.
pub fn plan_series(
    projects: &[Project],
    group_by: GroupBy,
    releases: Option<&[ReleaseWindow]>,
    attributes: Option<&BTreeMap<String, ProjectAttributes>>,
    min_faults: usize,
) -> Result<SeriesPlan, CliError> {
    if group_by.needs_attributes() && attributes.is_none() {
        return Err(CliError::Input(format!("--group-by {group_by} requires --attributes")));
    }
    if group_by == GroupBy::Releases && releases.is_none() {
        return Err(CliError::Input("--group-by releases requires --releases".into()));
    }
    let mut plan = SeriesPlan::default();
    let push = |plan: &mut SeriesPlan, project: &str, segment: String, series: FailureSeries| {
        if series.len() < MIN_SERIES_LEN {
            plan.skipped.push(SkipRecord {
                series: series.label().to_string(),
                model: None,
                reason: format!("too few failures ({} < {MIN_SERIES_LEN})", series.len()),
            });
        } else {
            plan.series.push(SeriesSpec {
                project: project.to_string(),
                segment,
                series,
            });
        }
    };

    for p in projects {
        match group_by {
            GroupBy::Releases => {
                let windows = releases.ok_or_else(|| {
                    CliError::Input("--group-by releases requires --releases".into())
                })?;
                let prefix = format!("{}/", p.name);
                let split = data::segment_releases(&p.issues, windows, min_faults, &prefix)?;
                for DroppedWindow { name, count } in split.dropped {
                    plan.skipped.push(SkipRecord {
                        series: format!("{prefix}{name}"),
                        model: None,
                        reason: format!("skipped (<{min_faults}): {count} faults"),
                    });
                }
                for s in split.kept {
                    push(&mut plan, &p.name, "releases".into(), s);
                }
            }
            _ => {
                let segment = match group_by {
                    GroupBy::Whole => "whole".to_string(),
                    GroupBy::Domain | GroupBy::Attribute(_) => {
                        let attrs = attributes.ok_or_else(|| {
                            CliError::Input(format!("--group-by {group_by} requires --attributes"))
                        })?;
                        let a = attrs.get(&p.name).ok_or_else(|| {
                            CliError::Input(format!("no attributes row for project `{}`", p.name))
                        })?;
                        match group_by {
                            GroupBy::Attribute(m) => a.size_class(m).to_string(),
                            _ => a.category.clone(),
                        }
                    }
                    GroupBy::Releases => unreachable!(),
                };
                match data::build_series(p.name.clone(), &p.issues, None) {
                    Ok(s) => push(&mut plan, &p.name, segment, s),
                    Err(DataError::EmptySeries) => plan.skipped.push(SkipRecord {
                        series: p.name.clone(),
                        model: None,
                        reason: "no issues".into(),
                    }),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(plan)
}

// ---------------------------------------------------------------- trend

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub series: String,
    pub trend: Option<TrendResult>,
    pub note: Option<String>,
}

fn trend_row(series: &FailureSeries) -> TrendRow {
    match trend::laplace_factor(series) {
        Ok(t) => TrendRow {
            series: series.label().to_string(),
            trend: Some(t),
            note: None,
        },
        Err(e) => TrendRow {
            series: series.label().to_string(),
            trend: None,
            note: Some(e.to_string()),
        },
    }
}

/// Laplace test per project and, when windows are given, per release.
pub fn run_trend(projects: &[Project], releases: Option<&[ReleaseWindow]>) -> Result<Vec<TrendRow>, CliError> {
    let mut rows = Vec::new();
    for p in projects {
        match data::build_series(p.name.clone(), &p.issues, None) {
            Ok(s) => rows.push(trend_row(&s)),
            Err(DataError::EmptySeries) => rows.push(TrendRow {
                series: p.name.clone(),
                trend: None,
                note: Some("no issues".into()),
            }),
            Err(e) => return Err(e.into()),
        }
        if let Some(windows) = releases {
            data::validate_windows(windows)?;
            for w in windows {
                let label = format!("{}/{}", p.name, w.name);
                match data::build_series(label.clone(), &p.issues, Some(w)) {
                    Ok(s) => rows.push(trend_row(&s)),
                    Err(DataError::EmptySeries) => rows.push(TrendRow {
                        series: label,
                        trend: None,
                        note: Some("no issues".into()),
                    }),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_trend(rows: &[TrendRow], out: &Path, formats: Formats) -> Result<(), CliError> {
    create_dir(out)?;
    if formats.csv {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| match &r.trend {
                Some(t) => vec![
                    r.series.clone(),
                    t.n.to_string(),
                    fmt_f64(t.horizon),
                    fmt_f64(t.u),
                    t.growth_significant.to_string(),
                    String::new(),
                ],
                None => vec![
                    r.series.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    r.note.clone().unwrap_or_default(),
                ],
            })
            .collect();
        write_file(
            &out.join("trend.csv"),
            &csv_bytes(&["series", "n", "horizon", "u", "growth_significant", "note"], &body),
        )?;
    }
    if formats.json {
        #[derive(Serialize)]
        struct Doc<'a> {
            laplace_variant: &'a str,
            series: &'a [TrendRow],
        }
        write_file(
            &out.join("trend.json"),
            &json_bytes(&Doc {
                laplace_variant: trend::LAPLACE_VARIANT,
                series: rows,
            }),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- fit

/// Formula variants in force, recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variants {
    pub aic_bic: String,
    pub laplace: String,
    pub ira: String,
    pub effect_size: String,
    pub time_unit: String,
    pub fit_method: String,
}

impl Default for Variants {
    fn default() -> Self {
        Variants {
            aic_bic: gof::AIC_BIC_VARIANT.into(),
            laplace: trend::LAPLACE_VARIANT.into(),
            ira: stats::IRA_VARIANT.into(),
            effect_size: stats::EFFECT_LEGEND.into(),
            time_unit: TIME_UNIT.into(),
            fit_method: "log-uniform random search (scale profiled) + Levenberg-Marquardt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub group_by: String,
    pub models: Vec<ModelId>,
    pub fit: FitConfig,
    pub min_faults: usize,
    pub variants: Variants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub series: String,
    pub project: String,
    pub segment: String,
    pub n: usize,
    pub horizon: f64,
    pub trend: Option<TrendResult>,
    pub times: Vec<f64>,
}

/// A model comparison within one segment (groups are models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentComparison {
    pub segment: String,
    pub metric: Metric,
    pub comparison: GroupComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub series: Vec<SeriesReport>,
    pub fits: Vec<(String, FitResult)>,
    pub skipped: Vec<SkipRecord>,
    pub comparisons: Vec<SegmentComparison>,
    pub ranking: Option<RankingTable>,
}

#[derive(Debug, Clone)]
pub struct FitRun {
    pub group_by: GroupBy,
    pub models: Vec<ModelId>,
    pub fit: FitConfig,
    pub min_faults: usize,
}

/// Trend test and all-model fits for every planned series.
pub fn run_fit(plan: SeriesPlan, run: &FitRun) -> Result<ReportBundle, CliError> {
    let mut models = run.models.clone();
    models.sort();
    models.dedup();
    if models.is_empty() {
        return Err(CliError::Input("no models selected".into()));
    }
    run.fit.validate().map_err(|e| CliError::Input(e.to_string()))?;

    let outcomes: Vec<Vec<fit::FitOutcome>> = plan
        .series
        .par_iter()
        .map(|spec| fit::fit_all(&spec.series, &models, &run.fit).expect("validated models and config"))
        .collect();

    let mut skipped = plan.skipped;
    let mut series = Vec::with_capacity(plan.series.len());
    let mut fits = Vec::new();
    for (spec, outs) in plan.series.iter().zip(outcomes) {
        let label = spec.series.label().to_string();
        series.push(SeriesReport {
            series: label.clone(),
            project: spec.project.clone(),
            segment: spec.segment.clone(),
            n: spec.series.len(),
            horizon: spec.series.horizon(),
            trend: trend::laplace_factor(&spec.series).ok(),
            times: spec.series.times().to_vec(),
        });
        for o in outs {
            match o.result {
                Ok(f) => fits.push((label.clone(), f)),
                Err(e) => skipped.push(SkipRecord {
                    series: label.clone(),
                    model: Some(o.model),
                    reason: e.to_string(),
                }),
            }
        }
    }

    let rows: Vec<GofRow> = fits
        .iter()
        .map(|(s, f)| GofRow::from_fit(s, f, segment_of(&series, s)))
        .collect();
    let comparisons = compare_rows(&rows, Metric::R2).ok().map(|c| c.comparisons).unwrap_or_default();
    let ranking = rank_rows(&rows, Metric::R2, None).ok();

    Ok(ReportBundle {
        metadata: RunMetadata {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            group_by: run.group_by.to_string(),
            models,
            fit: run.fit.clone(),
            min_faults: run.min_faults,
            variants: Variants::default(),
        },
        series,
        fits,
        skipped,
        comparisons,
        ranking,
    })
}

fn segment_of(series: &[SeriesReport], label: &str) -> String {
    series
        .iter()
        .find(|s| s.series == label)
        .map(|s| s.segment.clone())
        .unwrap_or_default()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `gof.csv`, `series.csv`, `skipped.csv`, `curves/*.csv` and
/// `report.json` as selected by `formats`.
pub fn write_fit_report(bundle: &ReportBundle, out: &Path, formats: Formats) -> Result<(), CliError> {
    create_dir(out)?;
    if formats.csv {
        let rows: Vec<Vec<String>> = bundle
            .fits
            .iter()
            .map(|(s, f)| {
                let p = f.params.values();
                vec![
                    s.clone(),
                    f.model.to_string(),
                    opt_num(p.first().copied()),
                    opt_num(p.get(1).copied()),
                    opt_num(p.get(2).copied()),
                    fmt_f64(f.rss),
                    fmt_f64(f.gof.r2),
                    fmt_f64(f.gof.aic),
                    fmt_f64(f.gof.bic),
                    fmt_f64(f.gof.rse),
                    f.converged.to_string(),
                ]
            })
            .collect();
        write_file(&out.join("gof.csv"), &csv_bytes(&GOF_HEADER, &rows))?;

        let rows: Vec<Vec<String>> = bundle
            .series
            .iter()
            .map(|s| {
                vec![
                    s.series.clone(),
                    s.project.clone(),
                    s.segment.clone(),
                    s.n.to_string(),
                    fmt_f64(s.horizon),
                    opt_num(s.trend.as_ref().map(|t| t.u)),
                    s.trend
                        .as_ref()
                        .map(|t| t.growth_significant.to_string())
                        .unwrap_or_default(),
                ]
            })
            .collect();
        write_file(
            &out.join("series.csv"),
            &csv_bytes(
                &["series", "project", "segment", "n", "horizon", "laplace_u", "growth_significant"],
                &rows,
            ),
        )?;

        let rows: Vec<Vec<String>> = bundle
            .skipped
            .iter()
            .map(|s| {
                vec![
                    s.series.clone(),
                    s.model.map(|m| m.to_string()).unwrap_or_default(),
                    s.reason.clone(),
                ]
            })
            .collect();
        write_file(&out.join("skipped.csv"), &csv_bytes(&["series", "model", "reason"], &rows))?;
    }

    // Curve data for plotting, one file per series.
    let curves = out.join("curves");
    create_dir(&curves)?;
    for s in &bundle.series {
        let fits: Vec<&FitResult> = bundle
            .fits
            .iter()
            .filter(|(label, _)| *label == s.series)
            .map(|(_, f)| f)
            .collect();
        let predictions: Vec<Vec<f64>> = fits.iter().map(|f| f.predict(&s.times)).collect();
        let mut header = vec!["t".to_string(), "observed".to_string()];
        header.extend(fits.iter().map(|f| f.model.to_string()));
        let rows: Vec<Vec<String>> = s
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut row = vec![fmt_f64(t), (i + 1).to_string()];
                row.extend(predictions.iter().map(|p| fmt_f64(p[i])));
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_file(
            &curves.join(format!("{}.csv", file_stem_for(&s.series))),
            &csv_bytes(&header, &rows),
        )?;
    }

    if formats.json {
        write_file(&out.join("report.json"), &json_bytes(bundle))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- compare / rank

/// One row of a `gof.csv` joined with its segment from `series.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub series: String,
    pub segment: String,
    pub model: ModelId,
    pub rss: f64,
    pub gof: Gof,
    pub converged: bool,
}

impl GofRow {
    fn from_fit(series: &str, f: &FitResult, segment: String) -> Self {
        GofRow {
            series: series.to_string(),
            segment,
            model: f.model,
            rss: f.rss,
            gof: f.gof,
            converged: f.converged,
        }
    }
}

/// Reads `gof.csv` and `series.csv` from each fit output directory.
pub fn load_fit_outputs(dirs: &[PathBuf]) -> Result<Vec<GofRow>, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Input("at least one fit output directory is required".into()));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let series_path = dir.join("series.csv");
        let mut segments = BTreeMap::new();
        let mut rdr = csv::Reader::from_path(&series_path).map_err(|e| io_err(&series_path, e))?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| io_err(&series_path, e))?;
            let (series, segment) = (rec.get(0), rec.get(2));
            match (series, segment) {
                (Some(s), Some(g)) => {
                    segments.insert(s.to_string(), g.to_string());
                }
                _ => return Err(io_err(&series_path, "expected series and segment columns")),
            }
        }

        let gof_path = dir.join("gof.csv");
        let mut rdr = csv::Reader::from_path(&gof_path).map_err(|e| io_err(&gof_path, e))?;
        let header = rdr.headers().map_err(|e| io_err(&gof_path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != GOF_HEADER {
            return Err(io_err(&gof_path, "unexpected header"));
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| io_err(&gof_path, e))?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let num = |i: usize| parse_f64(field(i)).map_err(|e| io_err(&gof_path, e));
            let series = field(0).to_string();
            let segment = segments
                .get(&series)
                .cloned()
                .ok_or_else(|| io_err(&gof_path, format!("series `{series}` missing from series.csv")))?;
            rows.push(GofRow {
                model: field(1).parse().map_err(|e| io_err(&gof_path, e))?,
                rss: num(5)?,
                gof: Gof {
                    r2: num(6)?,
                    aic: num(7)?,
                    bic: num(8)?,
                    rse: num(9)?,
                },
                converged: field(10) == "true",
                series,
                segment,
            });
        }
    }
    Ok(rows)
}

/// Mean and standard deviation of each metric for one (segment, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub segment: String,
    pub model: ModelId,
    pub count: usize,
    pub mean: Gof,
    pub sd: Gof,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub metric: Metric,
    pub legend: String,
    pub comparisons: Vec<SegmentComparison>,
    pub not_compared: Vec<(String, String)>,
    pub summaries: Vec<ModelSummary>,
}

fn by_segment(rows: &[GofRow]) -> BTreeMap<&str, BTreeMap<ModelId, Vec<&GofRow>>> {
    let mut map: BTreeMap<&str, BTreeMap<ModelId, Vec<&GofRow>>> = BTreeMap::new();
    for r in rows {
        map.entry(r.segment.as_str()).or_default().entry(r.model).or_default().push(r);
    }
    // Fixed order inside each cell so results ignore input order.
    for models in map.values_mut() {
        for cell in models.values_mut() {
            cell.sort_by(|a, b| a.series.cmp(&b.series).then(a.rss.total_cmp(&b.rss)));
        }
    }
    map
}

fn summarize(segment: &str, model: ModelId, cell: &[&GofRow]) -> ModelSummary {
    let pick = |m: Metric| stats::mean_sd(&cell.iter().map(|r| m.of(&r.gof)).collect::<Vec<_>>());
    let (r2, r2_sd) = pick(Metric::R2);
    let (aic, aic_sd) = pick(Metric::Aic);
    let (bic, bic_sd) = pick(Metric::Bic);
    let (rse, rse_sd) = pick(Metric::Rse);
    ModelSummary {
        segment: segment.to_string(),
        model,
        count: cell.len(),
        mean: Gof { r2, aic, bic, rse },
        sd: Gof { r2: r2_sd, aic: aic_sd, bic: bic_sd, rse: rse_sd },
    }
}

/// Kruskal-Wallis + Dunn across models within each segment.
///
/// Fails with a precondition error when no segment has at least two models
/// to compare.
pub fn compare_rows(rows: &[GofRow], metric: Metric) -> Result<CompareReport, CliError> {
    let mut comparisons = Vec::new();
    let mut not_compared = Vec::new();
    let mut summaries = Vec::new();
    let mut segments: Vec<(&str, BTreeMap<ModelId, Vec<&GofRow>>)> = by_segment(rows).into_iter().collect();
    segments.sort_by(|a, b| stats::segment_order(a.0, b.0));

    for (segment, models) in segments {
        let mut seg_summaries: Vec<ModelSummary> =
            models.iter().map(|(m, cell)| summarize(segment, *m, cell)).collect();
        seg_summaries.sort_by(|a, b| {
            let (x, y) = (metric.of(&a.mean), metric.of(&b.mean));
            let ord = if metric.higher_is_better() { y.total_cmp(&x) } else { x.total_cmp(&y) };
            ord.then(a.model.cmp(&b.model))
        });
        summaries.extend(seg_summaries);

        if models.len() < 2 {
            not_compared.push((segment.to_string(), format!("only {} model group", models.len())));
            continue;
        }
        let labels: Vec<String> = models.keys().map(|m| m.to_string()).collect();
        let groups: Vec<Vec<f64>> = models
            .values()
            .map(|cell| cell.iter().map(|r| metric.of(&r.gof)).collect())
            .collect();
        match stats::compare_groups(labels, groups) {
            Ok(comparison) => comparisons.push(SegmentComparison {
                segment: segment.to_string(),
                metric,
                comparison,
            }),
            Err(e) => not_compared.push((segment.to_string(), e.to_string())),
        }
    }
    if comparisons.is_empty() {
        let why = not_compared
            .iter()
            .map(|(s, r)| format!("{s}: {r}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CliError::Precondition(format!(
            "need at least two groups of {metric} values to compare ({why})"
        )));
    }
    Ok(CompareReport {
        metric,
        legend: stats::EFFECT_LEGEND.into(),
        comparisons,
        not_compared,
        summaries,
    })
}

pub fn write_compare(report: &CompareReport, out: &Path, formats: Formats) -> Result<(), CliError> {
    create_dir(out)?;
    if formats.csv {
        let rows: Vec<Vec<String>> = report
            .comparisons
            .iter()
            .map(|c| {
                let g = &c.comparison;
                vec![
                    c.segment.clone(),
                    c.metric.to_string(),
                    g.group_labels.len().to_string(),
                    g.n.to_string(),
                    fmt_f64(g.h),
                    g.df.to_string(),
                    fmt_f64(g.p_value),
                    opt_num(g.eta_squared),
                    g.effect.map(|e| e.as_str().to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        write_file(
            &out.join("kruskal.csv"),
            &csv_bytes(
                &["segment", "metric", "groups", "n", "h", "df", "p_value", "eta_squared", "effect"],
                &rows,
            ),
        )?;

        let mut rows = Vec::new();
        for c in &report.comparisons {
            let labels = &c.comparison.group_labels;
            for d in &c.comparison.dunn {
                rows.push(vec![
                    c.segment.clone(),
                    labels[d.i].clone(),
                    labels[d.j].clone(),
                    fmt_f64(d.z),
                    fmt_f64(d.p_raw),
                    fmt_f64(d.p_adjusted),
                ]);
            }
        }
        write_file(
            &out.join("dunn.csv"),
            &csv_bytes(&["segment", "model_a", "model_b", "z", "p_raw", "p_adj"], &rows),
        )?;

        let rows: Vec<Vec<String>> = report
            .summaries
            .iter()
            .map(|s| {
                vec![
                    s.segment.clone(),
                    s.model.to_string(),
                    s.count.to_string(),
                    fmt_f64(s.mean.r2),
                    fmt_f64(s.sd.r2),
                    fmt_f64(s.mean.aic),
                    fmt_f64(s.sd.aic),
                    fmt_f64(s.mean.bic),
                    fmt_f64(s.sd.bic),
                    fmt_f64(s.mean.rse),
                    fmt_f64(s.sd.rse),
                ]
            })
            .collect();
        write_file(
            &out.join("summary.csv"),
            &csv_bytes(
                &[
                    "segment", "model", "count", "r2_mean", "r2_sd", "aic_mean", "aic_sd",
                    "bic_mean", "bic_sd", "rse_mean", "rse_sd",
                ],
                &rows,
            ),
        )?;
    }
    if formats.json {
        write_file(&out.join("compare.json"), &json_bytes(report))?;
    }
    write_file(&out.join("legend.txt"), format!("{}\n", report.legend).as_bytes())?;
    Ok(())
}

/// Ranking table over the segments present in `rows`.
pub fn rank_rows(rows: &[GofRow], metric: Metric, models: Option<&[ModelId]>) -> Result<RankingTable, CliError> {
    let samples: Vec<MetricSample> = rows
        .iter()
        .map(|r| MetricSample {
            segment: r.segment.clone(),
            model: r.model,
            gof: r.gof,
        })
        .collect();
    Ok(stats::rank_models(&samples, metric, models)?)
}

pub fn write_rank(table: &RankingTable, out: &Path, formats: Formats) -> Result<(), CliError> {
    create_dir(out)?;
    if formats.csv {
        let mut header = vec!["model"];
        header.extend(table.segments.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = table
            .models
            .iter()
            .enumerate()
            .map(|(m, id)| {
                let mut row = vec![id.to_string()];
                row.extend(table.ranks.iter().map(|r| r[m].to_string()));
                row
            })
            .collect();
        write_file(&out.join("ranking.csv"), &csv_bytes(&header, &rows))?;

        let mut header = vec!["model".to_string()];
        header.extend(table.segments.iter().map(|s| format!("{s}_mean_{}", table.metric)));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = table
            .models
            .iter()
            .enumerate()
            .map(|(m, id)| {
                let mut row = vec![id.to_string()];
                row.extend(table.means.iter().map(|r| fmt_f64(r[m])));
                row
            })
            .collect();
        write_file(&out.join("ranking_means.csv"), &csv_bytes(&header, &rows))?;

        write_file(
            &out.join("ira.csv"),
            &csv_bytes(
                &["metric", "segments", "ira_percent", "rule"],
                &[vec![
                    table.metric.to_string(),
                    table.segments.len().to_string(),
                    opt_num(table.ira_percent),
                    stats::IRA_VARIANT.to_string(),
                ]],
            ),
        )?;
    }
    if formats.json {
        #[derive(Serialize)]
        struct Doc<'a> {
            ira_rule: &'a str,
            table: &'a RankingTable,
        }
        write_file(
            &out.join("rank.json"),
            &json_bytes(&Doc {
                ira_rule: stats::IRA_VARIANT,
                table,
            }),
        )?;
    }
    Ok(())
}

/// Set of distinct models present in a collection of rows.
pub fn models_in(rows: &[GofRow]) -> Vec<ModelId> {
    rows.iter().map(|r| r.model).collect::<BTreeSet<_>>().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 27.0 / 7.0, 1e-300, -2.5e17, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn group_by_parsing() {
        assert_eq!("whole".parse::<GroupBy>().unwrap(), GroupBy::Whole);
        assert_eq!(
            "attribute:nofa".parse::<GroupBy>().unwrap(),
            GroupBy::Attribute(AttributeMetric::Nofa)
        );
        assert!("attribute:xyz".parse::<GroupBy>().is_err());
        assert_eq!(GroupBy::Attribute(AttributeMetric::Loc).to_string(), "attribute:LOC");
    }

    #[test]
    fn formats_parsing() {
        assert_eq!("csv".parse::<Formats>().unwrap(), Formats { csv: true, json: false });
        assert_eq!("json,csv".parse::<Formats>().unwrap(), Formats { csv: true, json: true });
        assert!("xml".parse::<Formats>().is_err());
        assert!("".parse::<Formats>().is_err());
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem_for("proj/v1.2 beta"), "proj_v1.2_beta");
    }

    fn row(series: &str, segment: &str, model: ModelId, r2: f64) -> GofRow {
        GofRow {
            series: series.into(),
            segment: segment.into(),
            model,
            rss: 1.0,
            gof: Gof { r2, aic: 0.0, bic: 0.0, rse: 0.0 },
            converged: true,
        }
    }

    #[test]
    fn compare_needs_two_groups() {
        let rows = vec![row("a", "whole", ModelId::GO, 0.9), row("b", "whole", ModelId::GO, 0.8)];
        let err = compare_rows(&rows, Metric::R2).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn compare_two_groups() {
        let mut rows = Vec::new();
        for (i, v) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            rows.push(row(&format!("s{i}"), "whole", ModelId::GO, v));
        }
        for (i, v) in [4.0, 5.0, 6.0].into_iter().enumerate() {
            rows.push(row(&format!("s{i}"), "whole", ModelId::LL, v));
        }
        let rep = compare_rows(&rows, Metric::R2).unwrap();
        assert_eq!(rep.comparisons.len(), 1);
        assert!((rep.comparisons[0].comparison.h - 27.0 / 7.0).abs() < 1e-12);
        // Summary ordered best first.
        assert_eq!(rep.summaries[0].model, ModelId::LL);
        assert_eq!(rep.summaries[0].mean.r2, 5.0);
        assert_eq!(rep.summaries[0].sd.r2, 1.0);
    }
}
