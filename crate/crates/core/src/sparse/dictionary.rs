use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edm::{n_for_len, EdmVector};
use crate::error::{Error, Result};

/// Atoms must have unit Euclidean norm to within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-9;

pub const DICTIONARY_FORMAT: &str = "edmrec-dictionary";
pub const DICTIONARY_FORMAT_VERSION: u32 = 1;

/// `k` unit-norm atoms of length `N(N-1)/2`, stored atom-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atom_len: usize,
    atoms: Vec<f64>,
}

impl Dictionary {
    /// Wraps atom-major storage, checking the unit-norm invariant.
    pub fn new(atom_len: usize, atoms: Vec<f64>) -> Result<Self> {
        if atom_len == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(atom_len) {
            return Err(Error::invalid("dictionary needs at least one atom of nonzero length"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite dictionary entry"));
        }
        for (j, atom) in atoms.chunks_exact(atom_len).enumerate() {
            let norm = norm(atom);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(format!("atom {j} has norm {norm}, expected 1")));
            }
        }
        Ok(Dictionary { atom_len, atoms })
    }

    pub fn from_atoms(atoms: &[Vec<f64>]) -> Result<Self> {
        let len = atoms.first().map(Vec::len).unwrap_or(0);
        if atoms.iter().any(|a| a.len() != len) {
            return Err(Error::invalid("atoms differ in length"));
        }
        Self::new(len, atoms.concat())
    }

    /// Normalizes each atom before wrapping; zero atoms are rejected.
    pub fn normalized(atom_len: usize, mut atoms: Vec<f64>) -> Result<Self> {
        if atom_len == 0 {
            return Err(Error::invalid("zero atom length"));
        }
        for (j, atom) in atoms.chunks_exact_mut(atom_len).enumerate() {
            let norm = norm(atom);
            #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
            if !(norm > 0.0) {
                return Err(Error::invalid(format!("atom {j} is zero")));
            }
            atom.iter_mut().for_each(|v| *v /= norm);
        }
        Self::new(atom_len, atoms)
    }

    pub fn k(&self) -> usize {
        self.atoms.len() / self.atom_len
    }

    pub fn atom_len(&self) -> usize {
        self.atom_len
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.atom_len..(j + 1) * self.atom_len]
    }

    pub(crate) fn atom_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.atoms[j * self.atom_len..(j + 1) * self.atom_len]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.atoms.chunks_exact(self.atom_len)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.atoms
    }

    /// `D c` for a code of length `k`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.atom_len];
        for (w, atom) in weights.iter().zip(self.atoms()) {
            if *w != 0.0 {
                out.iter_mut().zip(atom).for_each(|(o, a)| *o += w * a);
            }
        }
        out
    }

    pub fn save(&self, header: &DictionaryHeader, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json(header)?.as_bytes())
    }

    pub fn to_json(&self, header: &DictionaryHeader) -> Result<String> {
        let file = DictionaryFile {
            format: DICTIONARY_FORMAT.into(),
            format_version: DICTIONARY_FORMAT_VERSION,
            library_version: crate::VERSION.into(),
            n: n_for_len(self.atom_len).unwrap_or(0),
            k: self.k(),
            atom_length: self.atom_len,
            lambda_used_in_training: header.lambda_used_in_training,
            seed: header.seed,
            atoms: self.atoms().map(<[f64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn load(path: &Path) -> Result<(Self, DictionaryHeader)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<(Self, DictionaryHeader)> {
        let file: DictionaryFile = serde_json::from_str(text)?;
        if file.format != DICTIONARY_FORMAT {
            return Err(Error::Format(format!("expected a '{DICTIONARY_FORMAT}' file, found '{}'", file.format)));
        }
        if file.format_version != DICTIONARY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dictionary format version {} (written by {}) is not supported; this build reads version {}",
                file.format_version, file.library_version, DICTIONARY_FORMAT_VERSION
            )));
        }
        if file.atoms.len() != file.k || file.atom_length != crate::edm::vector_len(file.n) {
            return Err(Error::Format("dictionary header disagrees with its atoms".into()));
        }
        let dict = Dictionary::from_atoms(&file.atoms)?;
        if dict.atom_len() != file.atom_length {
            return Err(Error::Format("atom length disagrees with header".into()));
        }
        Ok((dict, DictionaryHeader { lambda_used_in_training: file.lambda_used_in_training, seed: file.seed }))
    }

    pub fn atom_vector(&self, j: usize) -> EdmVector {
        EdmVector::from_vec_unchecked(self.atom(j).to_vec())
    }
}

/// Training provenance stored alongside the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryHeader {
    pub lambda_used_in_training: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    format: String,
    format_version: u32,
    library_version: String,
    n: usize,
    k: usize,
    atom_length: usize,
    lambda_used_in_training: f64,
    seed: u64,
    atoms: Vec<Vec<f64>>,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unit_atoms() {
        assert!(Dictionary::new(3, vec![1.0, 0.0, 0.0, 0.5, 0.0, 0.0]).is_err());
        assert!(Dictionary::normalized(3, vec![0.0; 3]).is_err());
        let d = Dictionary::normalized(3, vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(d.atom(0), &[0.6, 0.8, 0.0]);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let d = Dictionary::normalized(3, vec![1.0, 2.0, 2.0, 0.0, 0.0, 1.0]).unwrap();
        let header = DictionaryHeader { lambda_used_in_training: 0.1, seed: 9 };
        let text = d.to_json(&header).unwrap();
        let (back, h) = Dictionary::from_json(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(h, header);
        let bumped = text.replace("\"format_version\":1", "\"format_version\":7");
        assert!(matches!(Dictionary::from_json(&bumped), Err(Error::Format(_))));
    }
}
