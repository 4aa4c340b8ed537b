//! Normalization of 2D poses into the canonical `[-1, 1]` box and the two
//! ways of turning a partially observed pose into a full-size EDM.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::edm::{edm_from_pose, DistanceMatrix};
use crate::error::{Error, Result};
use crate::pose::{JointMask, Pose};

/// How occluded joints enter the EDM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Rows and columns of occluded joints are zero.
    Zero,
    /// Occluded joints sit at the centroid of the observed joints.
    Average,
}

impl Representation {
    pub fn build(self, pose: &Pose, mask: &JointMask) -> Result<DistanceMatrix> {
        match self {
            Representation::Zero => represent_zero(pose, mask),
            Representation::Average => represent_average(pose, mask),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Zero => "zero",
            Representation::Average => "average",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Representation::Zero),
            "average" | "ave" => Ok(Representation::Average),
            _ => Err(Error::invalid(format!("unknown representation '{s}'"))),
        }
    }
}

/// Isotropic similarity that maps the observed joints' bounding box to a box
/// centered at the origin whose longer side spans `[-1, 1]`.
///
/// Every joint goes through the same map; only observed joints are
/// meaningful to callers.
pub fn normalize_observed(pose: &Pose, mask: &JointMask) -> Result<Pose> {
    if pose.dim() != 2 {
        return Err(Error::invalid("normalization expects a 2D pose"));
    }
    let n = pose.num_joints();
    mask.validate(n)?;
    if n - mask.len() < 2 {
        return Err(Error::DegeneratePose("fewer than two observed joints".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in mask.observed(n) {
        let p = pose.joint(i);
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if side <= 0.0 {
        return Err(Error::DegeneratePose("all observed joints coincide".into()));
    }
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let scale = 2.0 / side;
    pose.map_joints(2, |p| vec![(p[0] - center[0]) * scale, (p[1] - center[1]) * scale])
}

/// EDM of the normalized observed joints, with zero rows and columns for
/// every occluded joint.
pub fn represent_zero(pose: &Pose, mask: &JointMask) -> Result<DistanceMatrix> {
    let normalized = normalize_observed(pose, mask)?;
    let full = edm_from_pose(&normalized);
    let n = full.n();
    let mut data = full.into_vec();
    for i in mask.occluded() {
        for j in 0..n {
            data[i * n + j] = 0.0;
            data[j * n + i] = 0.0;
        }
    }
    Ok(DistanceMatrix::from_vec_unchecked(n, data))
}

/// Replaces occluded joints by the observed centroid, then normalizes and
/// measures the whole pose.
pub fn represent_average(pose: &Pose, mask: &JointMask) -> Result<DistanceMatrix> {
    if pose.dim() != 2 {
        return Err(Error::invalid("normalization expects a 2D pose"));
    }
    let n = pose.num_joints();
    mask.validate(n)?;
    let observed = n - mask.len();
    let mut mean = [0.0; 2];
    for i in mask.observed(n) {
        let p = pose.joint(i);
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= observed as f64;
    mean[1] /= observed as f64;
    let mut filled = pose.clone();
    for i in mask.occluded() {
        filled.joint_mut(i).copy_from_slice(&mean);
    }
    let normalized = normalize_observed(&filled, &JointMask::empty())?;
    Ok(edm_from_pose(&normalized))
}
