//! Rank-based group comparison: Kruskal-Wallis, Dunn's post-hoc test with
//! Bonferroni adjustment, eta-squared effect size, model ranking tables and
//! inter-rater agreement between rankings.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::SizeClass;
use crate::error::StatsError;
use crate::fit::FitResult;
use crate::gof::{Gof, Metric};
use crate::models::ModelId;
use crate::special;

pub const IRA_VARIANT: &str = "pairwise: TA = #(model, unordered segment pair) with equal rank; \
     IRA = TA / (TR * R(R-1)/2) * 100";

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
/// Also returns the tie sum `sum(t^3 - t)` over tie groups.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

struct RankSummary {
    sizes: Vec<usize>,
    mean_ranks: Vec<f64>,
    total: usize,
    tie_sum: f64,
}

fn rank_groups(groups: &[Vec<f64>]) -> Result<RankSummary, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "at least 2 groups required, got {}",
            groups.len()
        )));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::InsufficientData(format!("group {i} is empty")));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.len() < 3 {
        return Err(StatsError::InsufficientData(format!(
            "at least 3 observations required, got {}",
            pooled.len()
        )));
    }
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(StatsError::InvalidArgument("NaN among group values".into()));
    }
    let (ranks, tie_sum) = average_ranks(&pooled);
    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        let sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        mean_ranks.push(sum / g.len() as f64);
        offset += g.len();
    }
    Ok(RankSummary {
        sizes: groups.iter().map(Vec::len).collect(),
        mean_ranks,
        total: pooled.len(),
        tie_sum,
    })
}

/// Kruskal-Wallis H (tie corrected) and its chi-square p-value with
/// `groups.len() - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<(f64, f64), StatsError> {
    let summary = rank_groups(groups)?;
    Ok(kw_from_summary(&summary, groups.len()))
}

fn kw_from_summary(s: &RankSummary, k: usize) -> (f64, f64) {
    let n = s.total as f64;
    let correction = 1.0 - s.tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        // Every observation tied.
        return (0.0, 1.0);
    }
    let spread: f64 = s
        .sizes
        .iter()
        .zip(&s.mean_ranks)
        .map(|(&size, &r)| size as f64 * (r - (n + 1.0) / 2.0).powi(2))
        .sum();
    let h = (12.0 / (n * (n + 1.0)) * spread / correction).max(0.0);
    (h, special::chi_square_sf(h, (k - 1) as f64))
}

/// Pairwise Dunn statistics for groups `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnPair {
    pub i: usize,
    pub j: usize,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

fn dunn_from_summary(s: &RankSummary) -> Vec<DunnPair> {
    let k = s.sizes.len();
    let n = s.total as f64;
    let comparisons = (k * (k - 1) / 2) as f64;
    let base = n * (n + 1.0) / 12.0 - s.tie_sum / (12.0 * (n - 1.0));
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = s.mean_ranks[i] - s.mean_ranks[j];
            let var = base * (1.0 / s.sizes[i] as f64 + 1.0 / s.sizes[j] as f64);
            let z = if diff == 0.0 || !(var > 0.0) { 0.0 } else { diff / var.sqrt() };
            let p_raw = special::normal_two_sided_p(z);
            out.push(DunnPair {
                i,
                j,
                z,
                p_raw,
                p_adjusted: (p_raw * comparisons).min(1.0),
            });
        }
    }
    out
}

/// Dunn's test: symmetric matrix of Bonferroni adjusted p-values (diagonal 1).
pub fn dunn_posthoc(groups: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let summary = rank_groups(groups)?;
    let k = groups.len();
    let mut m = vec![vec![1.0; k]; k];
    for pair in dunn_from_summary(&summary) {
        m[pair.i][pair.j] = pair.p_adjusted;
        m[pair.j][pair.i] = pair.p_adjusted;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectSize {
    Negligible,
    Small,
    Moderate,
    Large,
}

impl EffectSize {
    pub fn from_eta_squared(eta: f64) -> Self {
        if eta >= 0.14 {
            EffectSize::Large
        } else if eta >= 0.06 {
            EffectSize::Moderate
        } else if eta >= 0.01 {
            EffectSize::Small
        } else {
            EffectSize::Negligible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EffectSize::Negligible => "negligible",
            EffectSize::Small => "small",
            EffectSize::Moderate => "moderate",
            EffectSize::Large => "large",
        }
    }
}

pub const EFFECT_LEGEND: &str =
    "eta^2: 0.01 to <0.06 small effect; 0.06 to <0.14 moderate effect; >= 0.14 large effect";

/// `eta^2 = (H - k + 1) / (n - k)` and its conventional label.
pub fn eta_squared(h: f64, k: usize, n: usize) -> Result<(f64, EffectSize), StatsError> {
    if k < 2 || n <= k {
        return Err(StatsError::InvalidArgument(format!(
            "eta squared needs n > k >= 2 (n = {n}, k = {k})"
        )));
    }
    let eta = (h - k as f64 + 1.0) / (n - k) as f64;
    Ok((eta, EffectSize::from_eta_squared(eta)))
}

/// Kruskal-Wallis, effect size and Dunn post-hoc for one set of groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub group_labels: Vec<String>,
    pub group_values: Vec<Vec<f64>>,
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
    pub n: usize,
    /// Undefined when there are no more observations than groups.
    pub eta_squared: Option<f64>,
    pub effect: Option<EffectSize>,
    pub dunn: Vec<DunnPair>,
}

impl GroupComparison {
    pub fn dunn_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.group_labels.len();
        let mut m = vec![vec![1.0; k]; k];
        for pair in &self.dunn {
            m[pair.i][pair.j] = pair.p_adjusted;
            m[pair.j][pair.i] = pair.p_adjusted;
        }
        m
    }
}

pub fn compare_groups(
    labels: Vec<String>,
    groups: Vec<Vec<f64>>,
) -> Result<GroupComparison, StatsError> {
    if labels.len() != groups.len() {
        return Err(StatsError::InvalidArgument(
            "one label per group required".into(),
        ));
    }
    let summary = rank_groups(&groups)?;
    let k = groups.len();
    let (h, p_value) = kw_from_summary(&summary, k);
    let (eta, effect) = match eta_squared(h, k, summary.total) {
        Ok((eta, effect)) => (Some(eta), Some(effect)),
        Err(_) => (None, None),
    };
    Ok(GroupComparison {
        group_labels: labels,
        h,
        df: k - 1,
        p_value,
        n: summary.total,
        eta_squared: eta,
        effect,
        dunn: dunn_from_summary(&summary),
        group_values: groups,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One metric value for a (segment, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub segment: String,
    pub model: ModelId,
    pub gof: Gof,
}

/// Rows are models, columns segments; `ranks[s][m]` is the rank of
/// `models[m]` in `segments[s]` (1 = best).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub metric: Metric,
    pub segments: Vec<String>,
    pub models: Vec<ModelId>,
    pub means: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<usize>>,
    pub ira_percent: Option<f64>,
}

impl RankingTable {
    pub fn rank_of(&self, segment: &str, model: ModelId) -> Option<usize> {
        let s = self.segments.iter().position(|x| x == segment)?;
        let m = self.models.iter().position(|x| *x == model)?;
        Some(self.ranks[s][m])
    }

    /// Models of one segment ordered from best to worst.
    pub fn ordered_models(&self, segment: &str) -> Option<Vec<ModelId>> {
        let s = self.segments.iter().position(|x| x == segment)?;
        let mut ms: Vec<(usize, ModelId)> = self.ranks[s]
            .iter()
            .copied()
            .zip(self.models.iter().copied())
            .collect();
        ms.sort();
        Some(ms.into_iter().map(|(_, m)| m).collect())
    }
}

/// Segment display order: S, M, L size classes first (optionally after a
/// `METRIC:` prefix), then everything else lexicographically.
pub fn segment_order(a: &str, b: &str) -> Ordering {
    fn key(s: &str) -> Option<(&str, SizeClass)> {
        let (prefix, class) = s.rsplit_once(':').unwrap_or(("", s));
        class.parse::<SizeClass>().ok().map(|c| (prefix, c))
    }
    match (key(a), key(b)) {
        (Some(ka), Some(kb)) => ka.cmp(&kb),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

/// Ranks models within each segment by the segment mean of `metric`.
///
/// Ties are broken by [`ModelId`] order. `models` defaults to every model
/// appearing in the samples; each must be present in every segment.
pub fn rank_models(
    samples: &[MetricSample],
    metric: Metric,
    models: Option<&[ModelId]>,
) -> Result<RankingTable, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::InsufficientData("no results to rank".into()));
    }
    let mut cells: BTreeMap<(&str, ModelId), Vec<f64>> = BTreeMap::new();
    for s in samples {
        cells
            .entry((s.segment.as_str(), s.model))
            .or_default()
            .push(metric.of(&s.gof));
    }
    let mut segments: Vec<String> = samples
        .iter()
        .map(|s| s.segment.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    segments.sort_by(|a, b| segment_order(a, b));
    let models: Vec<ModelId> = match models {
        Some(m) => m.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        None => samples.iter().map(|s| s.model).collect::<BTreeSet<_>>().into_iter().collect(),
    };

    let mut means = Vec::with_capacity(segments.len());
    let mut ranks = Vec::with_capacity(segments.len());
    for seg in &segments {
        let row: Vec<f64> = models
            .iter()
            .map(|&m| {
                let values = cells.get(&(seg.as_str(), m)).ok_or_else(|| {
                    StatsError::CoverageGap {
                        model: m,
                        segment: seg.clone(),
                    }
                })?;
                // Sum in a fixed order so shuffled inputs give identical means.
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                Ok(sorted.iter().sum::<f64>() / sorted.len() as f64)
            })
            .collect::<Result<_, StatsError>>()?;
        let mut order: Vec<usize> = (0..models.len()).collect();
        order.sort_by(|&a, &b| {
            let by_value = if metric.higher_is_better() {
                row[b].total_cmp(&row[a])
            } else {
                row[a].total_cmp(&row[b])
            };
            by_value.then(models[a].cmp(&models[b]))
        });
        let mut rank_row = vec![0; models.len()];
        for (pos, &m) in order.iter().enumerate() {
            rank_row[m] = pos + 1;
        }
        means.push(row);
        ranks.push(rank_row);
    }

    let mut table = RankingTable {
        metric,
        segments,
        models,
        means,
        ranks,
        ira_percent: None,
    };
    if table.segments.len() >= 2 {
        table.ira_percent = Some(inter_rater_agreement(&table)?);
    }
    Ok(table)
}

/// Convenience wrapper over [`rank_models`] for fit results keyed by segment.
pub fn rank_fit_results(
    segments: &BTreeMap<String, Vec<FitResult>>,
    metric: Metric,
) -> Result<RankingTable, StatsError> {
    let samples: Vec<MetricSample> = segments
        .iter()
        .flat_map(|(seg, fits)| {
            fits.iter().map(move |f| MetricSample {
                segment: seg.clone(),
                model: f.model,
                gof: f.gof,
            })
        })
        .collect();
    rank_models(&samples, metric, None)
}

/// Percentage of (model, segment pair) cells in which both segments assign
/// the model the same rank.
pub fn inter_rater_agreement(table: &RankingTable) -> Result<f64, StatsError> {
    let raters = table.segments.len();
    if raters < 2 {
        return Err(StatsError::InsufficientData(
            "inter-rater agreement needs at least 2 segments".into(),
        ));
    }
    let ratings = table.models.len();
    if ratings == 0 {
        return Err(StatsError::InsufficientData("no ranked models".into()));
    }
    let mut agreements = 0usize;
    for m in 0..ratings {
        for a in 0..raters {
            for b in (a + 1)..raters {
                if table.ranks[a][m] == table.ranks[b][m] {
                    agreements += 1;
                }
            }
        }
    }
    let pairs = raters * (raters - 1) / 2;
    Ok(agreements as f64 / (ratings * pairs) as f64 * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gof_r2(r2: f64) -> Gof {
        Gof {
            r2,
            aic: -r2,
            bic: -r2,
            rse: 1.0 - r2,
        }
    }

    #[test]
    fn average_ranks_with_ties() {
        let (r, ties) = average_ranks(&[10.0, 20.0, 10.0, 30.0]);
        assert_eq!(r, vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(ties, 6.0);
    }

    #[test]
    fn kruskal_wallis_two_groups() {
        let (h, p) = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((h - 27.0 / 7.0).abs() < 1e-12);
        assert!((p - 0.0495).abs() < 5e-4);
    }

    #[test]
    fn identical_groups_are_degenerate() {
        let groups = vec![vec![5.0; 3], vec![5.0; 3]];
        assert_eq!(kruskal_wallis(&groups).unwrap(), (0.0, 1.0));
        let d = dunn_posthoc(&groups).unwrap();
        assert!(d.iter().flatten().all(|&p| p == 1.0));
    }

    #[test]
    fn kruskal_wallis_preconditions() {
        assert!(kruskal_wallis(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn dunn_orders_separation() {
        let groups = vec![
            vec![1.0, 2.0, 3.0],
            vec![10.0, 11.0, 12.0],
            vec![20.0, 21.0, 22.0],
        ];
        let m = dunn_posthoc(&groups).unwrap();
        assert!(m[0][2] < m[0][1]);
        for i in 0..3 {
            assert_eq!(m[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(m[i][j], m[j][i]);
                assert!((0.0..=1.0).contains(&m[i][j]));
            }
        }
        let interleaved = vec![
            vec![1.0, 4.0, 7.0],
            vec![2.0, 5.0, 8.0],
            vec![3.0, 6.0, 9.0],
        ];
        // raw p = 0.65 and 0.37; both exceed 1 after the x3 adjustment.
        let m = dunn_posthoc(&interleaved).unwrap();
        assert!(m.iter().flatten().all(|&p| p == 1.0));
    }

    #[test]
    fn eta_squared_values() {
        let (eta, label) = eta_squared(1.0, 2, 10).unwrap();
        assert_eq!(eta, 0.0);
        assert_eq!(label, EffectSize::Negligible);
        let (eta, label) = eta_squared(3.857143, 2, 6).unwrap();
        assert!((eta - 0.714286).abs() < 1e-6);
        assert_eq!(label.as_str(), "large");
        // eta = 0.05 with k = 3, n = 103 => H = 0.05 * 100 + 2 = 7
        let (eta, label) = eta_squared(7.0, 3, 103).unwrap();
        assert!((eta - 0.05).abs() < 1e-12);
        assert_eq!(label, EffectSize::Small);
        assert_eq!(EffectSize::from_eta_squared(0.06), EffectSize::Moderate);
        assert_eq!(EffectSize::from_eta_squared(0.14), EffectSize::Large);
        assert!(eta_squared(1.0, 3, 3).is_err());
    }

    #[test]
    fn ranking_by_mean_r2() {
        let samples = vec![
            MetricSample { segment: "all".into(), model: ModelId::WE, gof: gof_r2(0.976) },
            MetricSample { segment: "all".into(), model: ModelId::LL, gof: gof_r2(0.979) },
            MetricSample { segment: "all".into(), model: ModelId::YR, gof: gof_r2(0.977) },
        ];
        let t = rank_models(&samples, Metric::R2, None).unwrap();
        assert_eq!(t.rank_of("all", ModelId::LL), Some(1));
        assert_eq!(t.rank_of("all", ModelId::YR), Some(2));
        assert_eq!(t.rank_of("all", ModelId::WE), Some(3));
        assert_eq!(t.ira_percent, None);
        // RSE ranks ascending: LL has the smallest.
        let t = rank_models(&samples, Metric::Rse, None).unwrap();
        assert_eq!(t.rank_of("all", ModelId::LL), Some(1));
    }

    #[test]
    fn ties_follow_model_order() {
        let samples: Vec<MetricSample> = ModelId::ALL
            .iter()
            .rev()
            .map(|&m| MetricSample { segment: "x".into(), model: m, gof: gof_r2(0.9) })
            .collect();
        let t = rank_models(&samples, Metric::R2, None).unwrap();
        assert_eq!(t.ordered_models("x").unwrap(), ModelId::ALL.to_vec());
    }

    #[test]
    fn coverage_gap_names_the_cell() {
        let samples = vec![
            MetricSample { segment: "S".into(), model: ModelId::GO, gof: gof_r2(0.9) },
            MetricSample { segment: "S".into(), model: ModelId::LL, gof: gof_r2(0.8) },
            MetricSample { segment: "M".into(), model: ModelId::GO, gof: gof_r2(0.9) },
        ];
        let err = rank_models(&samples, Metric::R2, None).unwrap_err();
        assert_eq!(
            err,
            StatsError::CoverageGap { model: ModelId::LL, segment: "M".into() }
        );
    }

    #[test]
    fn size_classes_sort_small_to_large() {
        let mut segs = vec!["L", "S", "M", "C2", "C1"];
        segs.sort_by(|a, b| segment_order(a, b));
        assert_eq!(segs, vec!["S", "M", "L", "C1", "C2"]);
        let mut segs = vec!["NOC:L", "LOC:M", "LOC:S"];
        segs.sort_by(|a, b| segment_order(a, b));
        assert_eq!(segs, vec!["LOC:S", "LOC:M", "NOC:L"]);
    }

    #[test]
    fn agreement_extremes() {
        let full = RankingTable {
            metric: Metric::R2,
            segments: vec!["S".into(), "M".into(), "L".into()],
            models: ModelId::ALL.to_vec(),
            means: vec![vec![0.0; 9]; 3],
            ranks: vec![(1..=9).collect(); 3],
            ira_percent: None,
        };
        assert_eq!(inter_rater_agreement(&full).unwrap(), 100.0);
        let mut disjoint = full.clone();
        disjoint.ranks = vec![
            (1..=9).collect(),
            (1..=9).map(|r| r % 9 + 1).collect(),
            (1..=9).map(|r| (r + 1) % 9 + 1).collect(),
        ];
        assert_eq!(inter_rater_agreement(&disjoint).unwrap(), 0.0);
        let mut single = full;
        single.segments.truncate(1);
        single.ranks.truncate(1);
        assert!(inter_rater_agreement(&single).is_err());
    }
}
