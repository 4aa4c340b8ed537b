use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate_recovery, SparseRecoverer};
use crate::data::{Dataset, OcclusionPlan};
use crate::dictlearn::{learn_dictionary, LearnConfig};
use crate::edm::EdmVector;
use crate::error::{Error, Result};
use crate::sparse::LassoOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub err_ave: f64,
    #[serde(skip)]
    pub seconds_per_sample: f64,
    #[serde(skip)]
    pub learn_seconds: f64,
}

/// Learns one dictionary per size and scores sparse recovery with each.
pub fn sweep_sizes(
    train: &[EdmVector],
    test: &Dataset,
    plan: &OcclusionPlan,
    sizes: &[usize],
    config: &LearnConfig,
    lambda: f64,
    options: &LassoOptions,
) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::invalid("no dictionary sizes given"));
    }
    sizes
        .iter()
        .map(|&k| {
            let start = Instant::now();
            let (dictionary, _) = learn_dictionary(train, &LearnConfig { k, ..*config })?;
            let learn_seconds = start.elapsed().as_secs_f64();
            let report = evaluate_recovery(&SparseRecoverer { dictionary, lambda, options: *options }, test, plan)?;
            log::info!("k = {k}: err_ave {:.4}, {:.3e} s/sample", report.overall, report.timing.mean);
            Ok(SweepRow { k, err_ave: report.overall, seconds_per_sample: report.timing.mean, learn_seconds })
        })
        .collect()
}

/// `k err_ave` lines.
pub fn error_plot(rows: &[SweepRow]) -> String {
    rows.iter().map(|r| format!("{} {}\n", r.k, r.err_ave)).collect()
}

/// `k seconds_per_sample` lines.
pub fn time_plot(rows: &[SweepRow]) -> String {
    rows.iter().map(|r| format!("{} {}\n", r.k, r.seconds_per_sample)).collect()
}
