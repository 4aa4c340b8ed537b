//! Online dictionary learning: sparse codes for streamed mini-batches are
//! folded into statistics `A = Σ c cᵀ` and `B = Σ t cᵀ`, and the atoms follow
//! by one block-coordinate pass per batch. The statistics are discounted at
//! every epoch boundary so stale codes from early epochs fade out.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edm::EdmVector;
use crate::error::{Error, Result};
use crate::sparse::{solve_gram, Dictionary, Gram, LassoOptions, SPARSITY_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub k: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Atoms used fewer times than this in an epoch get replaced.
    pub atom_replacement_threshold: usize,
    /// Size of the fixed subset the per-epoch objective is measured on.
    pub validation_size: usize,
    /// Factor applied to `A` and `B` after every epoch. `0` starts each
    /// epoch from fresh statistics, `1` accumulates over the whole run.
    pub statistics_decay: f64,
    pub coding: LassoOptions,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            k: 256,
            lambda: 0.1,
            epochs: 10,
            batch_size: 64,
            seed: 0,
            atom_replacement_threshold: 1,
            validation_size: 200,
            statistics_decay: 0.0,
            coding: LassoOptions::default(),
        }
    }
}

/// Everything the online learner carries between mini-batches.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub dict: Dictionary,
    /// `k×k`, row-major.
    pub a: Vec<f64>,
    /// Column `j` of `B` (length `atom_len`) stored contiguously.
    pub b: Vec<f64>,
    pub samples_seen: usize,
    pub rng_seed: u64,
    pub coding: LassoOptions,
    usage: Vec<usize>,
    /// Worst-fitted samples of the current epoch, largest residual first.
    worst: Vec<(f64, Vec<f64>)>,
}

impl LearnerState {
    pub fn new(dict: Dictionary, rng_seed: u64, coding: LassoOptions) -> Self {
        let k = dict.k();
        let m = dict.atom_len();
        LearnerState {
            dict,
            a: vec![0.0; k * k],
            b: vec![0.0; m * k],
            samples_seen: 0,
            rng_seed,
            coding,
            usage: vec![0; k],
            worst: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.dict.k()
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.k() + j]
    }

    /// Per-atom count of nonzero codes since the last epoch boundary.
    pub fn usage(&self) -> &[usize] {
        &self.usage
    }

    /// Codes `batch`, accumulates statistics and updates the atoms.
    pub fn step(&mut self, batch: &[EdmVector], lambda: f64) -> Result<()> {
        let k = self.k();
        let m = self.dict.atom_len();
        if let Some(bad) = batch.iter().find(|t| t.len() != m) {
            return Err(Error::invalid(format!("sample length {} vs atom length {m}", bad.len())));
        }
        let codes = code_batch(&self.dict, batch, lambda, &self.coding)?;

        for (t, c) in batch.iter().zip(&codes) {
            let support: Vec<usize> = (0..k).filter(|&j| c[j] != 0.0).collect();
            for &i in &support {
                for &j in &support {
                    self.a[i * k + j] += c[i] * c[j];
                }
                let col = &mut self.b[i * m..(i + 1) * m];
                col.iter_mut().zip(t.as_slice()).for_each(|(bv, tv)| *bv += tv * c[i]);
                if c[i].abs() > SPARSITY_EPS {
                    self.usage[i] += 1;
                }
            }
            let fit = self.dict.combine(c);
            let residual = fit.iter().zip(t.as_slice()).map(|(f, v)| (f - v) * (f - v)).sum::<f64>();
            self.remember_worst(residual, t.as_slice());
        }
        self.samples_seen += batch.len();
        self.update_atoms();
        Ok(())
    }

    fn remember_worst(&mut self, residual: f64, sample: &[f64]) {
        let cap = self.k();
        if self.worst.len() == cap && self.worst.last().is_some_and(|w| w.0 >= residual) {
            return;
        }
        let at = self.worst.partition_point(|w| w.0 >= residual);
        self.worst.insert(at, (residual, sample.to_vec()));
        self.worst.truncate(cap);
    }

    /// One block-coordinate pass: `u_j = (B_j - D A_j) / A_jj + d_j`, then
    /// `d_j = u_j / ||u_j||`. Atoms with `A_jj = 0` are left alone.
    fn update_atoms(&mut self) {
        let k = self.k();
        let m = self.dict.atom_len();
        let mut u = vec![0.0; m];
        for j in 0..k {
            let ajj = self.a[j * k + j];
            if ajj <= 0.0 {
                continue;
            }
            u.copy_from_slice(&self.b[j * m..(j + 1) * m]);
            for l in 0..k {
                let alj = self.a[l * k + j];
                if alj != 0.0 {
                    u.iter_mut().zip(self.dict.atom(l)).for_each(|(ui, dl)| *ui -= alj * dl);
                }
            }
            let atom = self.dict.atom_mut(j);
            u.iter_mut().zip(atom.iter()).for_each(|(ui, dj)| *ui = *ui / ajj + dj);
            let norm = crate::sparse::dictionary::norm(&u);
            // Near-zero updates keep the old atom; the epoch-end replacement
            // deals with atoms that stop being used.
            if norm > 1e-12 {
                atom.iter_mut().zip(&u).for_each(|(dj, ui)| *dj = ui / norm);
            }
        }
    }

    /// Replaces atoms used fewer than `threshold` times this epoch with the
    /// worst-fitted samples, clears their statistics and starts a new usage
    /// window. Returns the number of replaced atoms.
    pub fn end_epoch(&mut self, threshold: usize) -> usize {
        let k = self.k();
        let m = self.dict.atom_len();
        let dead: Vec<usize> = (0..k).filter(|&j| self.usage[j] < threshold).collect();
        let mut replaced = 0;
        let mut candidates = std::mem::take(&mut self.worst).into_iter();
        for j in dead {
            let Some((_, sample)) = candidates.by_ref().find(|(_, s)| crate::sparse::dictionary::norm(s) > 0.0) else {
                break;
            };
            let norm = crate::sparse::dictionary::norm(&sample);
            self.dict.atom_mut(j).iter_mut().zip(&sample).for_each(|(d, s)| *d = s / norm);
            for l in 0..k {
                self.a[j * k + l] = 0.0;
                self.a[l * k + j] = 0.0;
            }
            self.b[j * m..(j + 1) * m].iter_mut().for_each(|v| *v = 0.0);
            replaced += 1;
        }
        self.usage.iter_mut().for_each(|u| *u = 0);
        replaced
    }

    /// Scales the accumulated statistics, discounting codes computed
    /// against older versions of the dictionary.
    pub fn decay(&mut self, factor: f64) {
        self.a.iter_mut().for_each(|v| *v *= factor);
        self.b.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Sparse codes of every sample against `dict`, in sample order.
fn code_batch(dict: &Dictionary, batch: &[EdmVector], lambda: f64, opts: &LassoOptions) -> Result<Vec<Vec<f64>>> {
    let gram = Gram::from_atoms(dict.as_slice(), dict.atom_len());
    batch
        .par_iter()
        .map(|t| {
            let corr: Vec<f64> = dict.atoms().map(|a| crate::sparse::lasso::dot(a, t.as_slice())).collect();
            let tt = crate::sparse::lasso::dot(t.as_slice(), t.as_slice());
            solve_gram(&gram, &corr, tt, lambda, opts).map(|s| s.code.weights().to_vec())
        })
        .collect()
}

/// Free-function form of [`LearnerState::step`].
pub fn learn_step(mut state: LearnerState, batch: &[EdmVector], lambda: f64) -> Result<LearnerState> {
    state.step(batch, lambda)?;
    Ok(state)
}

/// `k` atoms drawn from `samples` (without replacement when there are enough
/// samples, with replacement otherwise), each scaled to unit norm.
pub fn init_dictionary(samples: &[EdmVector], k: usize, seed: u64) -> Result<Dictionary> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot initialize a dictionary from zero samples"));
    }
    if k == 0 {
        return Err(Error::invalid("dictionary needs at least one atom"));
    }
    let m = samples[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if k <= samples.len() {
        rand::seq::index::sample(&mut rng, samples.len(), k).into_vec()
    } else {
        (0..k).map(|_| rand::Rng::random_range(&mut rng, 0..samples.len())).collect()
    };
    let mut atoms = Vec::with_capacity(k * m);
    for i in picks {
        if samples[i].len() != m {
            return Err(Error::invalid("samples differ in length"));
        }
        atoms.extend_from_slice(samples[i].as_slice());
    }
    Dictionary::normalized(m, atoms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub value: f64,
    pub solves: usize,
    pub not_converged: usize,
}

/// Mean over samples of `½(||t - D c||² + λ||c||₁)` with each `c` solved afresh.
pub fn objective(
    dict: &Dictionary,
    samples: &[EdmVector],
    lambda: f64,
    opts: &LassoOptions,
) -> Result<ObjectiveReport> {
    if samples.is_empty() {
        return Err(Error::invalid("objective needs at least one sample"));
    }
    let gram = Gram::from_atoms(dict.as_slice(), dict.atom_len());
    let parts: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|t| {
            let corr: Vec<f64> = dict.atoms().map(|a| crate::sparse::lasso::dot(a, t.as_slice())).collect();
            let tt = crate::sparse::lasso::dot(t.as_slice(), t.as_slice());
            let sol = solve_gram(&gram, &corr, tt, lambda, opts)?;
            let fit = dict.combine(sol.code.weights());
            let fidelity = crate::sparse::lasso::fidelity(&fit, t.as_slice());
            Ok((0.5 * (fidelity + lambda * sol.code.l1()), sol.converged))
        })
        .collect::<Result<_>>()?;
    let value = parts.iter().map(|p| p.0).sum::<f64>() / samples.len() as f64;
    let not_converged = parts.iter().filter(|p| !p.1).count();
    Ok(ObjectiveReport { value, solves: samples.len(), not_converged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub objective: f64,
    pub replaced_atoms: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub config: LearnConfig,
    pub samples: usize,
    pub initial_objective: f64,
    pub epochs: Vec<EpochReport>,
    pub total_seconds: f64,
    pub not_converged_codes: usize,
}

/// Learns a dictionary from complete EDM vectors.
pub fn learn_dictionary(samples: &[EdmVector], config: &LearnConfig) -> Result<(Dictionary, LearnReport)> {
    if !(0.0..=1.0).contains(&config.statistics_decay) {
        return Err(Error::invalid("statistics_decay must lie in [0, 1]"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if samples.len() < config.batch_size {
        return Err(Error::invalid(format!(
            "{} samples is fewer than one batch of {}",
            samples.len(),
            config.batch_size
        )));
    }
    let atom_len = samples[0].len();
    if config.k < atom_len {
        log::warn!("k = {} is below the vector length {atom_len}; the dictionary is not over-complete", config.k);
    }
    let started = Instant::now();
    let dict = init_dictionary(samples, config.k, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d1c7);
    let validation: Vec<EdmVector> = {
        let count = config.validation_size.clamp(1, samples.len());
        let mut idx = rand::seq::index::sample(&mut rng, samples.len(), count).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| samples[i].clone()).collect()
    };
    let initial = objective(&dict, &validation, config.lambda, &config.coding)?;
    let mut not_converged = initial.not_converged;
    let mut state = LearnerState::new(dict, config.seed, config.coding);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<EdmVector> = chunk.iter().map(|&i| samples[i].clone()).collect();
            state.step(&batch, config.lambda)?;
        }
        let replaced = state.end_epoch(config.atom_replacement_threshold);
        state.decay(config.statistics_decay);
        let obj = objective(&state.dict, &validation, config.lambda, &config.coding)?;
        not_converged += obj.not_converged;
        log::info!("epoch {epoch}: objective {:.6} replaced {replaced}", obj.value);
        epochs.push(EpochReport {
            epoch,
            objective: obj.value,
            replaced_atoms: replaced,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
    }
    let report = LearnReport {
        config: *config,
        samples: samples.len(),
        initial_objective: initial.value,
        epochs,
        total_seconds: started.elapsed().as_secs_f64(),
        not_converged_codes: not_converged,
    };
    Ok((state.dict, report))
}
