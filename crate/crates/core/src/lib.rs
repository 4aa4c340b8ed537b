//! Recovery of occluded joints in 2D human-pose Euclidean distance matrices.
//!
//! Two recoverers are provided: masked sparse coding over a dictionary
//! learned online from complete EDMs ([`sparse`], [`dictlearn`]) and a small
//! fully-convolutional EDM-to-EDM network ([`net`]). The same network type
//! serves as the 2D→3D EDM regressor that the recovered matrices feed into.
//! [`data`] and [`eval`] provide ingestion, a synthetic pose generator and
//! the per-category evaluation protocol.

pub mod data;
pub mod dictlearn;
pub mod edm;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pose;
pub mod represent;
pub mod sparse;

#[cfg(test)]
pub(crate) mod test_util;

pub use edm::{
    assemble_final, devectorize, edm_from_pose, entry_positions, observed_positions, vector_len, vectorize,
    DistanceMatrix, EdmVector,
};
pub use error::{Error, Result};
pub use metrics::{err_ave, err_matrix, pose_error, ErrorMatrix};
pub use pose::{JointMask, Pose, JOINT_NAMES, NUM_JOINTS};
pub use represent::{normalize_observed, represent_average, represent_zero, Representation};
pub use sparse::{
    extract_subproblem, kkt_residual, reconstruct, recover_sparse, solve_lasso, Dictionary, LassoOptions,
    MaskedProblem, SparseCode,
};

/// Library version embedded in every file this crate writes.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
