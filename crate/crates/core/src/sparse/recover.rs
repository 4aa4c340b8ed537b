use super::{extract_subproblem, solve_lasso, Dictionary, LassoOptions, LassoSolution, SparseCode};
use crate::edm::{assemble_final, devectorize, vectorize, DistanceMatrix, EdmVector};
use crate::error::{Error, Result};
use crate::pose::JointMask;

/// Regularization weight used when none is given.
pub const DEFAULT_LAMBDA: f64 = 0.1;

/// `Σ c_i B_i` over the full vector length.
pub fn reconstruct(dict: &Dictionary, code: &SparseCode) -> Result<EdmVector> {
    if code.len() != dict.k() {
        return Err(Error::invalid(format!("code has {} weights for {} atoms", code.len(), dict.k())));
    }
    Ok(EdmVector::from_vec_unchecked(dict.combine(code.weights())))
}

#[derive(Debug, Clone)]
pub struct SparseRecovery {
    /// Input entries where both joints are observed, dictionary fit elsewhere.
    pub matrix: DistanceMatrix,
    /// Dictionary fit before splicing, negatives clamped.
    pub reconstructed: DistanceMatrix,
    pub clamped: usize,
    pub solution: LassoSolution,
}

/// Fits the observed entries of `occluded` with a sparse code over `dict`
/// and fills the occluded rows and columns from the reconstruction.
pub fn recover_sparse(
    occluded: &DistanceMatrix,
    mask: &JointMask,
    dict: &Dictionary,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<SparseRecovery> {
    let n = occluded.n();
    let t = vectorize(occluded);
    let problem = extract_subproblem(&t, mask, dict, lambda)?;
    let solution = solve_lasso(&problem, opts)?;
    if !solution.converged {
        log::debug!("sparse code not converged: kkt residual {:.3e}", solution.kkt_residual);
    }
    let full = reconstruct(dict, &solution.code)?;
    let (reconstructed, clamped) = devectorize(&full, n)?;
    let matrix = assemble_final(occluded, &reconstructed, mask)?;
    Ok(SparseRecovery { matrix, reconstructed, clamped, solution })
}
