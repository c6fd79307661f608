//! Issue-tracker ingestion and failure series construction.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::DataError;
use crate::series::FailureSeries;

/// Offset given to failures that coincide with the observation start.
pub const ZERO_TIME_SHIFT: f64 = 1e-6;
/// Releases with fewer defects than this are not fitted.
pub const DEFAULT_MIN_FAULTS: usize = 20;

pub const DEFAULT_KEYWORDS: [&str; 5] = ["bug", "error", "fail", "fault", "defect"];
pub const DEFAULT_EXCLUSIONS: [&str; 1] = ["duplicat"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: u64,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
    pub labels: Vec<String>,
    pub title: String,
    pub state: String,
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses RFC 3339, a naive `YYYY-MM-DDTHH:MM:SS` (taken as UTC) or a bare date.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc());
    }
    Err(format!("unparseable timestamp `{s}`"))
}

/// A record that could not be converted and was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipNote {
    /// Zero-based position of the record in the input.
    pub index: usize,
    pub id: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedIssues {
    pub records: Vec<IssueRecord>,
    pub skipped: Vec<SkipNote>,
}

fn byte_offset(doc: &[u8], base: usize, line: usize, column: usize) -> usize {
    // serde_json reports 1-based lines and columns.
    let mut offset = base;
    let mut remaining = line.saturating_sub(1);
    for (i, b) in doc[base..].iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if *b == b'\n' {
            remaining -= 1;
            offset = base + i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(doc.len())
}

fn label_name(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Object(o) => o.get("name").and_then(Value::as_str).map(str::to_string),
        _ => None,
    }
}

pub(crate) fn convert(index: usize, v: &Value) -> Result<IssueRecord, SkipNote> {
    let id = v
        .get("id")
        .and_then(Value::as_u64)
        .or_else(|| v.get("number").and_then(Value::as_u64));
    let skip = |reason: String| SkipNote { index, id, reason };
    if !v.is_object() {
        return Err(skip("record is not a JSON object".into()));
    }
    let id = id.ok_or_else(|| skip("missing integer `id`".into()))?;
    let created_at = match v.get("created_at") {
        Some(Value::String(s)) => parse_timestamp(s).map_err(skip)?,
        Some(Value::Null) | None => return Err(skip("missing `created_at`".into())),
        Some(_) => return Err(skip("`created_at` is not a string".into())),
    };
    let labels = v
        .get("labels")
        .and_then(Value::as_array)
        .map(|ls| ls.iter().filter_map(label_name).collect())
        .unwrap_or_default();
    let text = |key: &str| {
        v.get(key)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    };
    Ok(IssueRecord {
        id,
        created_at,
        labels,
        title: text("title"),
        state: text("state"),
    })
}

/// Parses a JSON array or newline-delimited JSON objects.
///
/// Records missing `created_at` (or an id) are skipped and reported; the
/// rest are returned sorted by creation time, then id.
pub fn parse_issues(document: &[u8]) -> Result<ParsedIssues, DataError> {
    let start = document
        .iter()
        .position(|b| !b.is_ascii_whitespace())
        .unwrap_or(document.len());
    let values: Vec<Value> = if start == document.len() {
        Vec::new()
    } else if document[start] == b'[' {
        serde_json::from_slice(document).map_err(|e| DataError::Parse {
            offset: byte_offset(document, 0, e.line(), e.column()),
            message: e.to_string(),
        })?
    } else {
        let mut out = Vec::new();
        let mut line_start = 0;
        for line in document.split(|b| *b == b'\n') {
            if !line.iter().all(u8::is_ascii_whitespace) {
                let v = serde_json::from_slice(line).map_err(|e| DataError::Parse {
                    offset: byte_offset(document, line_start, e.line(), e.column()),
                    message: e.to_string(),
                })?;
                out.push(v);
            }
            line_start += line.len() + 1;
        }
        out
    };

    let mut parsed = ParsedIssues::default();
    for (i, v) in values.iter().enumerate() {
        match convert(i, v) {
            Ok(r) => parsed.records.push(r),
            Err(note) => parsed.skipped.push(note),
        }
    }
    parsed
        .records
        .sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
    Ok(parsed)
}

pub fn read_issues<R: Read>(mut reader: R) -> Result<ParsedIssues, DataError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    parse_issues(&buf)
}

/// Writes records as newline-delimited JSON with plain-string labels.
pub fn write_issues<W: Write>(records: &[IssueRecord], mut out: W) -> Result<(), DataError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| DataError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectFilter {
    pub keywords: Vec<String>,
    pub exclusions: Vec<String>,
    /// Also match keywords against issue titles.
    pub match_titles: bool,
}

impl Default for DefectFilter {
    fn default() -> Self {
        DefectFilter {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            exclusions: DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect(),
            match_titles: false,
        }
    }
}

impl DefectFilter {
    pub fn is_defect(&self, issue: &IssueRecord) -> bool {
        let labels: Vec<String> = issue.labels.iter().map(|l| l.to_lowercase()).collect();
        let hit = |text: &str, words: &[String]| {
            words.iter().any(|w| text.contains(w.to_lowercase().as_str()))
        };
        if labels.iter().any(|l| hit(l, &self.exclusions)) {
            return false;
        }
        labels.iter().any(|l| hit(l, &self.keywords))
            || (self.match_titles && hit(&issue.title.to_lowercase(), &self.keywords))
    }
}

/// Keeps defect reports: any keyword among the labels, no exclusion label.
pub fn filter_defects(issues: &[IssueRecord], filter: &DefectFilter) -> Vec<IssueRecord> {
    issues.iter().filter(|i| filter.is_defect(i)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseWindow {
    pub name: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl ReleaseWindow {
    pub fn new(name: impl Into<String>, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, DataError> {
        let name = name.into();
        if start >= end {
            return Err(DataError::InvalidWindow {
                name,
                reason: "start must precede end".into(),
            });
        }
        Ok(ReleaseWindow { name, start, end })
    }

    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        *t >= self.start && *t < self.end
    }
}

/// Rejects overlapping windows.
pub fn validate_windows(windows: &[ReleaseWindow]) -> Result<(), DataError> {
    let mut sorted: Vec<&ReleaseWindow> = windows.iter().collect();
    sorted.sort_by_key(|w| w.start);
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(DataError::InvalidWindow {
                name: pair[1].name.clone(),
                reason: format!("overlaps `{}`", pair[0].name),
            });
        }
    }
    Ok(())
}

fn days_between(from: &DateTime<Utc>, to: &DateTime<Utc>) -> f64 {
    let d = *to - *from;
    match d.num_nanoseconds() {
        Some(ns) => ns as f64 / 86_400e9,
        None => d.num_milliseconds() as f64 / 86_400e3,
    }
}

/// Cumulative failure series in fractional days.
///
/// Without a window the observation starts at the earliest issue and ends at
/// the latest; with one, only issues in `[start, end)` count and the horizon
/// is the window length.
pub fn build_series(
    label: impl Into<String>,
    issues: &[IssueRecord],
    window: Option<&ReleaseWindow>,
) -> Result<FailureSeries, DataError> {
    let mut stamps: Vec<DateTime<Utc>> = issues
        .iter()
        .map(|i| i.created_at)
        .filter(|t| window.is_none_or(|w| w.contains(t)))
        .collect();
    if stamps.is_empty() {
        return Err(DataError::EmptySeries);
    }
    stamps.sort();
    let origin = window.map_or(stamps[0], |w| w.start);
    let times: Vec<f64> = stamps
        .iter()
        .map(|t| days_between(&origin, t).max(ZERO_TIME_SHIFT))
        .collect();
    let last = *times.last().unwrap();
    let horizon = match window {
        Some(w) => days_between(&w.start, &w.end).max(last),
        None => last,
    };
    FailureSeries::new(label, times, horizon)
}

/// A release window that was not fitted, with its defect count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedWindow {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReleaseSeries {
    pub kept: Vec<FailureSeries>,
    pub dropped: Vec<DroppedWindow>,
}

/// One series per window holding at least `min_faults` issues; smaller
/// windows are reported in `dropped`. Series are labelled
/// `{prefix}{window name}`.
pub fn segment_releases(
    issues: &[IssueRecord],
    windows: &[ReleaseWindow],
    min_faults: usize,
    prefix: &str,
) -> Result<ReleaseSeries, DataError> {
    validate_windows(windows)?;
    let mut out = ReleaseSeries::default();
    for w in windows {
        let count = issues.iter().filter(|i| w.contains(&i.created_at)).count();
        if count == 0 || count < min_faults {
            out.dropped.push(DroppedWindow {
                name: w.name.clone(),
                count,
            });
            continue;
        }
        out.kept
            .push(build_series(format!("{prefix}{}", w.name), issues, Some(w))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    S,
    M,
    L,
}

impl SizeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::S => "S",
            SizeClass::M => "M",
            SizeClass::L => "L",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => Ok(SizeClass::S),
            "M" => Ok(SizeClass::M),
            "L" => Ok(SizeClass::L),
            other => Err(format!("unknown size class `{other}`")),
        }
    }
}

/// Project attribute used for size segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeMetric {
    /// Lines of code.
    Loc,
    /// Number of contributors.
    Noc,
    /// Number of issues.
    Noi,
    /// Number of faults.
    Nofa,
}

impl AttributeMetric {
    pub const ALL: [AttributeMetric; 4] = [
        AttributeMetric::Loc,
        AttributeMetric::Noc,
        AttributeMetric::Noi,
        AttributeMetric::Nofa,
    ];

    /// Inclusive `(medium_min, medium_max)`; below is small, above large.
    pub fn medium_range(self) -> (u64, u64) {
        match self {
            AttributeMetric::Loc => (10_000, 100_000),
            AttributeMetric::Noc => (100, 300),
            AttributeMetric::Noi => (1_000, 10_000),
            AttributeMetric::Nofa => (500, 5_000),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeMetric::Loc => "LOC",
            AttributeMetric::Noc => "NOC",
            AttributeMetric::Noi => "NOI",
            AttributeMetric::Nofa => "NOFA",
        }
    }
}

impl FromStr for AttributeMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributeMetric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown attribute `{s}` (expected LOC, NOC, NOI or NOFA)"))
    }
}

impl fmt::Display for AttributeMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_attribute(metric: AttributeMetric, value: u64) -> SizeClass {
    let (lo, hi) = metric.medium_range();
    if value < lo {
        SizeClass::S
    } else if value <= hi {
        SizeClass::M
    } else {
        SizeClass::L
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectAttributes {
    pub project: String,
    /// Domain category, `C1` to `C8`.
    pub category: String,
    pub loc: u64,
    pub noc: u64,
    pub noi: u64,
    pub nofa: u64,
}

impl ProjectAttributes {
    pub fn value(&self, metric: AttributeMetric) -> u64 {
        match metric {
            AttributeMetric::Loc => self.loc,
            AttributeMetric::Noc => self.noc,
            AttributeMetric::Noi => self.noi,
            AttributeMetric::Nofa => self.nofa,
        }
    }

    pub fn size_class(&self, metric: AttributeMetric) -> SizeClass {
        classify_attribute(metric, self.value(metric))
    }
}

fn is_category(s: &str) -> bool {
    s.strip_prefix('C')
        .and_then(|d| d.parse::<u8>().ok())
        .is_some_and(|d| (1..=8).contains(&d))
}

fn csv_err(path: &str, e: impl fmt::Display) -> DataError {
    DataError::Csv {
        path: path.to_string(),
        message: e.to_string(),
    }
}

/// Reads a `project,category,loc,noc,noi,nofa` CSV.
pub fn read_attributes<R: Read>(reader: R, path: &str) -> Result<Vec<ProjectAttributes>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<ProjectAttributes>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if !is_category(&row.category) {
            return Err(csv_err(
                path,
                format!("project `{}`: category `{}` is not C1..C8", row.project, row.category),
            ));
        }
        out.push(row);
    }
    Ok(out)
}

/// Reads a `name,start,end` CSV of release windows.
pub fn read_releases<R: Read>(reader: R, path: &str) -> Result<Vec<ReleaseWindow>, DataError> {
    #[derive(Deserialize)]
    struct Row {
        name: String,
        start: String,
        end: String,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let start = parse_timestamp(&row.start).map_err(|e| csv_err(path, e))?;
        let end = parse_timestamp(&row.end).map_err(|e| csv_err(path, e))?;
        out.push(ReleaseWindow::new(row.name, start, end)?);
    }
    validate_windows(&out)?;
    Ok(out)
}

/// RFC 3339 rendering used in reports.
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}
