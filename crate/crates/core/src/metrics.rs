//! Elementwise percentage error between EDMs and its off-diagonal average.

use crate::edm::DistanceMatrix;
use crate::error::{Error, Result};

/// Ground-truth entries below this are treated as coincident joints and left
/// out of the average.
pub const MIN_GT_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    n: usize,
    entries: Vec<f64>,
    valid: Vec<bool>,
}

impl ErrorMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.n + j]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// `|est - gt| / gt * 100` per entry.
pub fn err_matrix(est: &DistanceMatrix, gt: &DistanceMatrix) -> Result<ErrorMatrix> {
    let n = gt.n();
    if est.n() != n {
        return Err(Error::invalid(format!("size mismatch: {} vs {n}", est.n())));
    }
    let mut entries = vec![0.0; n * n];
    let mut valid = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let g = gt.get(i, j);
            if i == j || g < MIN_GT_DISTANCE {
                continue;
            }
            entries[i * n + j] = (est.get(i, j) - g).abs() / g * 100.0;
            valid[i * n + j] = true;
        }
    }
    Ok(ErrorMatrix { n, entries, valid })
}

/// Mean over valid entries; with only the diagonal excluded the divisor is `N² - N`.
pub fn err_ave(err: &ErrorMatrix) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, v) in err.entries.iter().zip(&err.valid) {
        if *v {
            sum += e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::DegenerateMetric);
    }
    Ok(sum / count as f64)
}

/// Convenience for `err_ave(err_matrix(est, gt))`.
pub fn pose_error(est: &DistanceMatrix, gt: &DistanceMatrix) -> Result<f64> {
    err_ave(&err_matrix(est, gt)?)
}
