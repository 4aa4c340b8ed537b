//! Poses, joint masks and the fixed 14-joint skeleton convention.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint count of the skeleton convention used throughout the crate.
pub const NUM_JOINTS: usize = 14;

/// Joint order of the skeleton convention.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "head",
    "neck",
    "right-shoulder",
    "right-elbow",
    "right-wrist",
    "left-shoulder",
    "left-elbow",
    "left-wrist",
    "right-hip",
    "right-knee",
    "right-ankle",
    "left-hip",
    "left-knee",
    "left-ankle",
];

pub mod joint {
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const R_HIP: usize = 8;
    pub const R_KNEE: usize = 9;
    pub const R_ANKLE: usize = 10;
    pub const L_HIP: usize = 11;
    pub const L_KNEE: usize = 12;
    pub const L_ANKLE: usize = 13;
}

/// An ordered set of joint coordinates in 2D (image) or 3D (world) space.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    dim: usize,
    coords: Vec<f64>,
}

impl Pose {
    /// Builds a pose from per-joint coordinate rows.
    pub fn new(joints: &[Vec<f64>]) -> Result<Self> {
        let dim = joints.first().map(Vec::len).unwrap_or(0);
        if !(dim == 2 || dim == 3) {
            return Err(Error::invalid(format!("joint dimensionality must be 2 or 3, got {dim}")));
        }
        if joints.iter().any(|j| j.len() != dim) {
            return Err(Error::invalid("joints have mixed dimensionality"));
        }
        Self::from_flat(dim, joints.iter().flatten().copied().collect())
    }

    pub fn from_points2(joints: &[[f64; 2]]) -> Result<Self> {
        Self::from_flat(2, joints.iter().flatten().copied().collect())
    }

    pub fn from_points3(joints: &[[f64; 3]]) -> Result<Self> {
        Self::from_flat(3, joints.iter().flatten().copied().collect())
    }

    /// Builds a pose from interleaved coordinates (`x0, y0, x1, y1, ...`).
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::invalid(format!("joint dimensionality must be 2 or 3, got {dim}")));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid("coordinate count is not a multiple of the dimensionality"));
        }
        if coords.len() / dim < 2 {
            return Err(Error::invalid("a pose needs at least two joints"));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate on joint {}", pos / dim)));
        }
        Ok(Pose { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_joints(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn joint(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn joint_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn joints(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.joints().map(<[f64]>::to_vec).collect()
    }

    /// Applies `f` to every joint, returning a new pose of dimensionality `dim`.
    pub fn map_joints(&self, dim: usize, f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Pose> {
        let coords = self.joints().flat_map(f).collect();
        Pose::from_flat(dim, coords)
    }
}

/// The set of occluded joint indices of one pose.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointMask {
    occluded: BTreeSet<usize>,
}

impl JointMask {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a mask for an `n`-joint pose; at least one joint must stay observed.
    pub fn new(occluded: impl IntoIterator<Item = usize>, n: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for i in occluded {
            if i >= n {
                return Err(Error::invalid(format!("occluded joint {i} out of range for {n} joints")));
            }
            if !set.insert(i) {
                return Err(Error::invalid(format!("occluded joint {i} listed twice")));
            }
        }
        if set.len() >= n {
            return Err(Error::invalid("a mask may not occlude every joint"));
        }
        Ok(JointMask { occluded: set })
    }

    /// Re-checks the invariants against a joint count.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.occluded.iter().any(|&i| i >= n) || self.occluded.len() >= n {
            return Err(Error::invalid(format!("mask {:?} invalid for {n} joints", self.occluded)));
        }
        Ok(())
    }

    pub fn is_occluded(&self, i: usize) -> bool {
        self.occluded.contains(&i)
    }

    pub fn len(&self) -> usize {
        self.occluded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occluded.is_empty()
    }

    pub fn occluded(&self) -> impl Iterator<Item = usize> + '_ {
        self.occluded.iter().copied()
    }

    pub fn observed(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        (0..n).filter(move |i| !self.occluded.contains(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Pose::from_points2(&[[0.0, 0.0], [f64::NAN, 1.0]]).is_err());
        assert!(Pose::from_points2(&[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn mask_invariants() {
        assert!(JointMask::new([3, 3], 14).is_err());
        assert!(JointMask::new([14], 14).is_err());
        assert!(JointMask::new([0, 1], 2).is_err());
        let m = JointMask::new([5, 1], 14).unwrap();
        assert_eq!(m.occluded().collect::<Vec<_>>(), vec![1, 5]);
        assert_eq!(m.observed(14).count(), 12);
    }
}
