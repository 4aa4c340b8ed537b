//! Euclidean distance matrices, their upper-triangle vectorization and the
//! splice that puts recovered entries back into an occluded matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{JointMask, Pose};

/// Largest tolerated |E(i,j) - E(j,i)| for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// An N×N symmetric, nonnegative, zero-diagonal matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates and wraps a row-major `n×n` buffer.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::invalid(format!("expected {n}x{n} entries, got {}", data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at ({i},{i})")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("entry ({i},{j}) = {v} is not a finite distance")));
                }
                if j > i && (v - data[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(Error::invalid(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("distance matrix rows must be square"));
        }
        Self::from_vec(n, rows.concat())
    }

    pub fn zeros(n: usize) -> Self {
        DistanceMatrix { n, data: vec![0.0; n * n] }
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_vec_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        DistanceMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks_exact(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Multiplies every entry by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::invalid(format!("scale factor {factor} must be finite and >= 0")));
        }
        Ok(DistanceMatrix { n: self.n, data: self.data.iter().map(|v| v * factor).collect() })
    }

    pub fn max_abs_diff(&self, other: &DistanceMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for DistanceMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<DistanceMatrix> for Vec<Vec<f64>> {
    fn from(m: DistanceMatrix) -> Self {
        m.to_rows()
    }
}

/// Strict upper triangle of a distance matrix, row-major: `(i, j)` with
/// `i < j` sits at `i*N - i(i+1)/2 + (j - i - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdmVector {
    values: Vec<f64>,
}

impl EdmVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if n_for_len(values.len()).is_none() {
            return Err(Error::invalid(format!("{} is not a triangular length N(N-1)/2", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in EDM vector"));
        }
        Ok(EdmVector { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        EdmVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Vector length for an `n`-joint matrix.
pub const fn vector_len(n: usize) -> usize {
    n * (n.saturating_sub(1)) / 2
}

/// Inverse of [`vector_len`]; `None` when `len` is not triangular with N ≥ 2.
pub fn n_for_len(len: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (n >= 2 && vector_len(n) == len).then_some(n)
}

#[inline]
pub const fn upper_index(i: usize, j: usize, n: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Pairwise Euclidean distances between the joints of `pose`.
pub fn edm_from_pose(pose: &Pose) -> DistanceMatrix {
    let n = pose.num_joints();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let pi = pose.joint(i);
        for j in i + 1..n {
            let d = pi.iter().zip(pose.joint(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    DistanceMatrix::from_vec_unchecked(n, data)
}

pub fn vectorize(edm: &DistanceMatrix) -> EdmVector {
    let n = edm.n();
    let mut values = Vec::with_capacity(vector_len(n));
    for i in 0..n {
        values.extend_from_slice(&edm.data[i * n + i + 1..(i + 1) * n]);
    }
    EdmVector { values }
}

/// Rebuilds the symmetric matrix from its upper triangle. Negative entries are
/// clamped to zero; the second value counts how many were clamped.
pub fn devectorize(vec: &EdmVector, n: usize) -> Result<(DistanceMatrix, usize)> {
    if vec.len() != vector_len(n) || n < 2 {
        return Err(Error::invalid(format!("vector of length {} does not describe a {n}x{n} matrix", vec.len())));
    }
    let mut data = vec![0.0; n * n];
    let mut clamped = 0;
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            let mut v = vec.values[k];
            if v < 0.0 {
                v = 0.0;
                clamped += 1;
            }
            data[i * n + j] = v;
            data[j * n + i] = v;
            k += 1;
        }
    }
    Ok((DistanceMatrix::from_vec_unchecked(n, data), clamped))
}

/// Vector positions whose row or column joint is occluded, ascending.
pub fn entry_positions(mask: &JointMask, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if mask.is_occluded(i) || mask.is_occluded(j) {
                out.push(upper_index(i, j, n));
            }
        }
    }
    out
}

/// Vector positions with both joints observed, ascending.
pub fn observed_positions(mask: &JointMask, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(vector_len(n));
    for i in 0..n {
        for j in i + 1..n {
            if !mask.is_occluded(i) && !mask.is_occluded(j) {
                out.push(upper_index(i, j, n));
            }
        }
    }
    out
}

/// Keeps `input` wherever both joints are observed and takes `recovered`
/// everywhere else.
pub fn assemble_final(input: &DistanceMatrix, recovered: &DistanceMatrix, mask: &JointMask) -> Result<DistanceMatrix> {
    let n = input.n();
    if recovered.n() != n {
        return Err(Error::invalid(format!("size mismatch: {n} vs {}", recovered.n())));
    }
    mask.validate(n)?;
    let mut data = recovered.data.clone();
    for i in 0..n {
        if mask.is_occluded(i) {
            continue;
        }
        for j in 0..n {
            if !mask.is_occluded(j) {
                data[i * n + j] = input.data[i * n + j];
            }
        }
    }
    Ok(DistanceMatrix::from_vec_unchecked(n, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri() -> DistanceMatrix {
        let s = 2f64.sqrt();
        DistanceMatrix::from_rows(&[vec![0., 1., 1.], vec![1., 0., s], vec![1., s, 0.]]).unwrap()
    }

    #[test]
    fn unit_triangle() {
        let p = Pose::from_points2(&[[0., 0.], [1., 0.], [0., 1.]]).unwrap();
        assert_eq!(edm_from_pose(&p), tri());
        let p = Pose::from_points2(&[[3., 4.], [3., 4.]]).unwrap();
        assert_eq!(edm_from_pose(&p), DistanceMatrix::zeros(2));
    }

    #[test]
    fn rigid_motion_invariance() {
        let p = Pose::from_points2(&[[0.3, 1.2], [4.0, -2.0], [7.5, 3.3], [-1.0, 0.0]]).unwrap();
        let (s, c) = 37f64.to_radians().sin_cos();
        let q = p.map_joints(2, |j| vec![c * j[0] - s * j[1] + 5.0, s * j[0] + c * j[1] - 2.0]).unwrap();
        assert!(edm_from_pose(&p).max_abs_diff(&edm_from_pose(&q)) <= 1e-9);
    }

    #[test]
    fn vectorize_ordering() {
        let v = vectorize(&tri());
        assert_eq!(v.as_slice(), &[1.0, 1.0, 2f64.sqrt()]);
        let (m, clamped) = devectorize(&v, 3).unwrap();
        assert_eq!(m, tri());
        assert_eq!(clamped, 0);
        assert_eq!(vectorize(&DistanceMatrix::zeros(14)).len(), 91);
    }

    #[test]
    fn devectorize_clamps_and_checks_length() {
        let (m, clamped) = devectorize(&EdmVector::new(vec![0.0; 91]).unwrap(), 14).unwrap();
        assert_eq!(m, DistanceMatrix::zeros(14));
        assert_eq!(clamped, 0);
        let (m, clamped) = devectorize(&EdmVector::new(vec![1.0, -0.01, 2.0]).unwrap(), 3).unwrap();
        assert_eq!(clamped, 1);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(2, 0), 0.0);
        assert!(devectorize(&EdmVector::new(vec![1.0, 1.0, 1.0]).unwrap(), 4).is_err());
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(DistanceMatrix::from_rows(&[vec![0., 1.], vec![1.1, 0.]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![1., 1.], vec![1., 0.]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0., -1.], vec![-1., 0.]]).is_err());
    }

    #[test]
    fn position_counts() {
        assert_eq!(entry_positions(&JointMask::new([5], 14).unwrap(), 14).len(), 13);
        assert_eq!(entry_positions(&JointMask::new([2, 9], 14).unwrap(), 14).len(), 25);
        assert!(entry_positions(&JointMask::empty(), 14).is_empty());
    }

    #[test]
    fn position_cardinality_exhaustive() {
        // every mask with up to three joints, N up to 14
        for n in 4..=14 {
            for a in 0..n {
                for b in a..n {
                    for c in b..n {
                        let mask = JointMask::new([a, b, c].into_iter().collect::<std::collections::BTreeSet<_>>(), n)
                            .unwrap();
                        let m = mask.len();
                        let got = entry_positions(&mask, n);
                        assert_eq!(got.len(), m * n - m * (m + 1) / 2);
                        let obs = observed_positions(&mask, n);
                        assert_eq!(got.len() + obs.len(), vector_len(n));
                    }
                }
            }
        }
    }

    #[test]
    fn assemble_cases() {
        let a = edm_from_pose(&Pose::from_points2(&[[0., 0.], [1., 0.], [0., 1.], [2., 2.]]).unwrap());
        let b = edm_from_pose(&Pose::from_points2(&[[0., 0.], [3., 0.], [0., 5.], [1., 1.]]).unwrap());
        assert_eq!(assemble_final(&a, &b, &JointMask::empty()).unwrap(), a);
        let mask = JointMask::new([0, 1], 4).unwrap();
        let f = assemble_final(&a, &b, &mask).unwrap();
        let from_input = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .filter(|&(i, j)| f.get(i, j) == a.get(i, j) && a.get(i, j) != b.get(i, j))
            .count();
        assert_eq!(from_input, 1);
        assert_eq!(f.get(2, 3), a.get(2, 3));
        assert_eq!(f.get(0, 2), b.get(0, 2));
        assert!(assemble_final(&a, &DistanceMatrix::zeros(3), &mask).is_err());
    }

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (2usize..16).prop_flat_map(|n| {
            prop::collection::vec(-100.0f64..100.0, n * 2).prop_map(|c| Pose::from_flat(2, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn vector_round_trip(pose in pose_strategy()) {
            let e = edm_from_pose(&pose);
            let (back, clamped) = devectorize(&vectorize(&e), e.n()).unwrap();
            prop_assert_eq!(clamped, 0);
            prop_assert_eq!(&back, &e);
            prop_assert_eq!(vectorize(&back), vectorize(&e));
        }

        #[test]
        fn scaling_is_linear(pose in pose_strategy(), s in 0.01f64..50.0) {
            let scaled = pose.map_joints(2, |j| j.iter().map(|v| v * s).collect()).unwrap();
            let lhs = edm_from_pose(&scaled);
            let rhs = edm_from_pose(&pose).scaled(s).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9 * (1.0 + s * 300.0));
        }

        #[test]
        fn assemble_is_idempotent(pose in pose_strategy(), other_seed in 0u64..1000, occ in 0usize..16) {
            let n = pose.num_joints();
            let e = edm_from_pose(&pose);
            let shifted = pose.map_joints(2, |j| vec![j[0] * 1.3 + other_seed as f64, j[1] * 0.7]).unwrap();
            let re = edm_from_pose(&shifted);
            let mask = JointMask::new([occ % n], n).unwrap();
            let f = assemble_final(&e, &re, &mask).unwrap();
            prop_assert_eq!(&assemble_final(&f, &re, &mask).unwrap(), &f);
        }
    }
}
