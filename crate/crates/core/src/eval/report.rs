use serde::{Deserialize, Serialize};

use crate::data::CATEGORIES;
use crate::error::Result;

/// Outcome for one evaluated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    pub id: String,
    pub category: String,
    pub occluded: usize,
    pub err_ave: f64,
    /// Wall time of the method on this record; kept out of serialized
    /// reports so they stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub name: String,
    pub count: usize,
    /// `None` when the group is empty.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub total: f64,
}

impl TimingStats {
    pub fn from_seconds(seconds: &[f64]) -> Self {
        if seconds.is_empty() {
            return Self::default();
        }
        let mut s = seconds.to_vec();
        s.sort_by(f64::total_cmp);
        let total: f64 = s.iter().sum();
        let mid = s.len() / 2;
        let median = if s.len() % 2 == 1 { s[mid] } else { 0.5 * (s[mid - 1] + s[mid]) };
        TimingStats { mean: total / s.len() as f64, median, min: s[0], max: s[s.len() - 1], total }
    }
}

/// Per-category error table for one method and occlusion regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub regime: String,
    /// `2d` for recovery, `3d` for the full pipeline.
    pub target: String,
    pub provenance: String,
    /// The fixed table categories in column order, then any other labels
    /// found in the data, sorted.
    pub categories: Vec<GroupStat>,
    /// Record-count-weighted mean of the category means.
    pub overall: f64,
    /// Population variance of the per-sample errors.
    pub variance: f64,
    pub by_occluded: Vec<GroupStat>,
    pub samples: Vec<SampleResult>,
    #[serde(skip)]
    pub timing: TimingStats,
}

fn mean_of(values: impl Iterator<Item = f64>) -> (usize, Option<f64>) {
    let mut n = 0;
    let mut sum = 0.0;
    for v in values {
        n += 1;
        sum += v;
    }
    (n, (n > 0).then(|| sum / n as f64))
}

impl EvalReport {
    pub fn from_samples(
        method: &str,
        regime: &str,
        target: &str,
        provenance: &str,
        samples: Vec<SampleResult>,
    ) -> Self {
        let mut names: Vec<String> = CATEGORIES.iter().map(|c| c.to_string()).collect();
        let mut extra: Vec<String> =
            samples.iter().map(|s| s.category.clone()).filter(|c| !CATEGORIES.contains(&c.as_str())).collect();
        extra.sort_unstable();
        extra.dedup();
        names.extend(extra);
        let categories: Vec<GroupStat> = names
            .into_iter()
            .map(|name| {
                let (count, mean) = mean_of(samples.iter().filter(|s| s.category == name).map(|s| s.err_ave));
                GroupStat { name, count, mean }
            })
            .collect();
        let overall = weighted_overall(&categories);
        let (n, mean) = mean_of(samples.iter().map(|s| s.err_ave));
        let mean = mean.unwrap_or(0.0);
        let variance =
            if n == 0 { 0.0 } else { samples.iter().map(|s| (s.err_ave - mean).powi(2)).sum::<f64>() / n as f64 };
        let max_m = samples.iter().map(|s| s.occluded).max().unwrap_or(0);
        let by_occluded = (1..=max_m)
            .map(|m| {
                let (count, mean) = mean_of(samples.iter().filter(|s| s.occluded == m).map(|s| s.err_ave));
                GroupStat { name: m.to_string(), count, mean }
            })
            .collect();
        let timing = TimingStats::from_seconds(&samples.iter().map(|s| s.seconds).collect::<Vec<_>>());
        EvalReport {
            method: method.into(),
            regime: regime.into(),
            target: target.into(),
            provenance: provenance.into(),
            categories,
            overall,
            variance,
            by_occluded,
            samples,
            timing,
        }
    }

    /// Mean error over records with exactly `m` occluded joints.
    pub fn mean_for_occluded(&self, m: usize) -> Option<f64> {
        self.by_occluded.iter().find(|g| g.name == m.to_string()).and_then(|g| g.mean)
    }

    /// `index err_ave` lines, one per record.
    pub fn trace_plot(&self) -> String {
        self.samples.iter().map(|s| format!("{} {}\n", s.index, s.err_ave)).collect()
    }
}

/// `Σ count·mean / Σ count` over non-empty categories.
pub fn weighted_overall(categories: &[GroupStat]) -> f64 {
    let mut num = 0.0;
    let mut den = 0usize;
    for c in categories {
        if let Some(m) = c.mean {
            num += c.count as f64 * m;
            den += c.count;
        }
    }
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

/// Table rows (method × regime) with the category columns, Overall,
/// variance and record count.
pub fn table_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut columns: Vec<String> = CATEGORIES.iter().map(|c| c.to_string()).collect();
    for r in reports {
        for c in &r.categories {
            if !columns.contains(&c.name) {
                columns.push(c.name.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string(), "regime".into(), "target".into()];
    header.extend(columns.iter().cloned());
    header.extend(["Overall".into(), "variance".into(), "samples".into()]);
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.method.clone(), r.regime.clone(), r.target.clone()];
        for name in &columns {
            let cell = r.categories.iter().find(|c| &c.name == name).and_then(|c| c.mean);
            row.push(cell.map(|v| format!("{v:.4}")).unwrap_or_default());
        }
        row.push(format!("{:.4}", r.overall));
        row.push(format!("{:.4}", r.variance));
        row.push(r.samples.len().to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))
}

#[derive(Serialize)]
struct TimingRow<'a> {
    method: &'a str,
    regime: &'a str,
    target: &'a str,
    samples: usize,
    seconds_per_sample: TimingStats,
}

/// Timing sidecar for a set of reports.
pub fn timing_json(reports: &[EvalReport]) -> Result<String> {
    let rows: Vec<TimingRow> = reports
        .iter()
        .map(|r| TimingRow {
            method: &r.method,
            regime: &r.regime,
            target: &r.target,
            samples: r.samples.len(),
            seconds_per_sample: r.timing,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}
