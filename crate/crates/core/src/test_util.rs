//! Random fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::sparse::{Dictionary, MaskedProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_dictionary(r: &mut impl Rng, atom_len: usize, k: usize) -> Dictionary {
    Dictionary::normalized(atom_len, gaussian(r, atom_len * k)).unwrap()
}

/// Unit-norm Gaussian atoms and a Gaussian target.
pub fn gaussian_problem(r: &mut impl Rng, rows: usize, k: usize, lambda: f64) -> MaskedProblem {
    let d = random_dictionary(r, rows, k);
    MaskedProblem::new(gaussian(r, rows), d.as_slice().to_vec(), lambda).unwrap()
}
