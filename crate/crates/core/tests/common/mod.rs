#![allow(dead_code)]

use srgm_core::{FailureSeries, ModelId};

/// Direct evaluation of the textbook mean value functions. Shares no code
/// with the library so it can serve as an independent generator.
pub fn reference_mean(id: ModelId, p: &[f64], t: f64) -> f64 {
    match id {
        ModelId::GO => p[0] * (1.0 - (-p[1] * t).exp()),
        ModelId::GOS => p[0] * (1.0 - (1.0 + p[1] * t) * (-p[1] * t).exp()),
        ModelId::HD => p[0] * (1.0 - (-p[1] * t).exp()) / (1.0 + p[2] * (-p[1] * t).exp()),
        ModelId::MO => p[0] * (p[1] * t + 1.0).ln(),
        ModelId::DU => p[0] * t.powf(p[1]),
        ModelId::WE => p[0] * (1.0 - (-p[1] * t.powf(p[2])).exp()),
        ModelId::YE => p[0] * (1.0 - (-p[1] * (1.0 - (-p[2] * t).exp())).exp()),
        ModelId::YR => p[0] * (1.0 - (-p[1] * (1.0 - (-p[2] * t * t / 2.0).exp())).exp()),
        ModelId::LL => {
            let u = (p[1] * t).powf(p[2]);
            p[0] * u / (1.0 + u)
        }
    }
}

/// Noiseless series: the i-th failure occurs exactly where m(t) = i.
pub fn generate_series(id: ModelId, p: &[f64], n: usize) -> FailureSeries {
    let times: Vec<f64> = (1..=n)
        .map(|i| {
            let target = i as f64;
            let mut hi = 1.0;
            while reference_mean(id, p, hi) < target {
                hi *= 2.0;
                assert!(hi < 1e12, "{id} never reaches {target}");
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if reference_mean(id, p, mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    FailureSeries::from_times(format!("{id}-generated"), times).unwrap()
}

/// Generating parameters used by the recovery checks.
pub fn recovery_cases() -> Vec<(ModelId, Vec<f64>)> {
    vec![
        (ModelId::DU, vec![5.0, 0.7]),
        (ModelId::GO, vec![500.0, 0.05]),
        (ModelId::GOS, vec![400.0, 0.1]),
        (ModelId::HD, vec![450.0, 0.03, 2.0]),
        (ModelId::LL, vec![350.0, 0.05, 2.5]),
        (ModelId::MO, vec![60.0, 0.5]),
        (ModelId::WE, vec![400.0, 0.02, 1.5]),
        (ModelId::YE, vec![300.0, 2.0, 0.05]),
        (ModelId::YR, vec![300.0, 2.5, 0.002]),
    ]
}

pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| ((g - w) / w).abs())
        .fold(0.0, f64::max)
}

/// Issue export (JSON array) with one bug-labelled issue per failure time,
/// counted in days from 2021-01-01T00:00:00Z.
pub fn issues_json(times: &[f64]) -> String {
    let base = chrono::DateTime::parse_from_rfc3339("2021-01-01T00:00:00Z").unwrap();
    let recs: Vec<serde_json::Value> = times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let at = base + chrono::Duration::milliseconds((t * 86_400e3).round() as i64);
            serde_json::json!({
                "number": i + 1,
                "created_at": at.to_rfc3339(),
                "labels": [{"name": "bug"}],
                "title": format!("failure {}", i + 1),
            })
        })
        .collect();
    serde_json::to_string(&recs).unwrap()
}

/// 50 issues: 30 defect-labelled, five of which are also duplicates.
pub fn fifty_issue_fixture() -> String {
    let recs: Vec<serde_json::Value> = (0..50u64)
        .map(|i| {
            let labels = match i {
                0..=24 => serde_json::json!([{"name": "bug"}]),
                25..=29 => serde_json::json!([{"name": "Bug"}, {"name": "duplicated"}]),
                30..=39 => serde_json::json!(["enhancement"]),
                _ => serde_json::json!([]),
            };
            serde_json::json!({
                "number": i + 1,
                "created_at": format!("2021-02-{:02}T10:00:00Z", 1 + i % 28),
                "labels": labels,
                "title": "something failed",
            })
        })
        .collect();
    serde_json::to_string(&recs).unwrap()
}
