//! Recovery of occluded EDM entries by sparse coding over a learned
//! over-complete dictionary.

pub(crate) mod dictionary;
pub(crate) mod lasso;
mod recover;

pub use dictionary::{Dictionary, DictionaryHeader, DICTIONARY_FORMAT, DICTIONARY_FORMAT_VERSION, UNIT_NORM_TOL};
pub use lasso::{
    extract_subproblem, kkt_residual, lasso_objective, solve_gram, solve_lasso, Gram, LassoOptions, LassoSolution,
    MaskedProblem, SparseCode, SPARSITY_EPS,
};
pub use recover::{reconstruct, recover_sparse, SparseRecovery, DEFAULT_LAMBDA};
