//! Masked LASSO: `min_c ||t - D c||² + λ ||c||₁` by accelerated proximal
//! gradient with a monotone restart.

use serde::{Deserialize, Serialize};

use super::Dictionary;
use crate::edm::{observed_positions, EdmVector};
use crate::error::{Error, Result};
use crate::pose::JointMask;

/// Weights with magnitude above this count towards the reported sparsity.
pub const SPARSITY_EPS: f64 = 1e-8;

const POWER_ITERS: usize = 30;
const POWER_TOL: f64 = 1e-6;

/// A LASSO instance restricted to the observed vector positions.
#[derive(Debug, Clone)]
pub struct MaskedProblem {
    observed_values: Vec<f64>,
    observed_positions: Vec<usize>,
    /// `k × rows`, atom-major.
    sub_atoms: Vec<f64>,
    k: usize,
    lambda: f64,
}

impl MaskedProblem {
    /// A problem over explicit atoms (`k × rows`, atom-major) with every
    /// position observed.
    pub fn new(values: Vec<f64>, sub_atoms: Vec<f64>, lambda: f64) -> Result<Self> {
        let rows = values.len();
        if rows == 0 {
            return Err(Error::EmptyProblem);
        }
        if sub_atoms.is_empty() || !sub_atoms.len().is_multiple_of(rows) {
            return Err(Error::invalid("sub-atoms must be k blocks of the observed length"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if values.iter().chain(&sub_atoms).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite problem data"));
        }
        let k = sub_atoms.len() / rows;
        Ok(MaskedProblem { observed_values: values, observed_positions: (0..rows).collect(), sub_atoms, k, lambda })
    }

    pub fn rows(&self) -> usize {
        self.observed_values.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn observed_values(&self) -> &[f64] {
        &self.observed_values
    }

    pub fn observed_positions(&self) -> &[usize] {
        &self.observed_positions
    }

    pub fn sub_atom(&self, j: usize) -> &[f64] {
        let rows = self.rows();
        &self.sub_atoms[j * rows..(j + 1) * rows]
    }

    /// Same problem with another regularization weight.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// `D_sub c`.
    fn apply(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let rows = self.rows();
        for (j, &w) in c.iter().enumerate() {
            if w != 0.0 {
                let atom = &self.sub_atoms[j * rows..(j + 1) * rows];
                out.iter_mut().zip(atom).for_each(|(o, a)| *o += w * a);
            }
        }
    }

    /// `D_subᵀ r`.
    fn apply_t(&self, r: &[f64], out: &mut [f64]) {
        for (o, atom) in out.iter_mut().zip(self.sub_atoms.chunks_exact(self.rows())) {
            *o = dot(atom, r);
        }
    }
}

/// Restricts `t` and every atom to the positions whose joints are both observed.
pub fn extract_subproblem(t: &EdmVector, mask: &JointMask, dict: &Dictionary, lambda: f64) -> Result<MaskedProblem> {
    if t.len() != dict.atom_len() {
        return Err(Error::invalid(format!("vector length {} vs atom length {}", t.len(), dict.atom_len())));
    }
    let n = crate::edm::n_for_len(t.len()).ok_or_else(|| Error::invalid("vector length is not triangular"))?;
    mask.validate(n)?;
    let positions = observed_positions(mask, n);
    if positions.is_empty() {
        return Err(Error::EmptyProblem);
    }
    let values = positions.iter().map(|&p| t.as_slice()[p]).collect();
    let mut sub_atoms = Vec::with_capacity(positions.len() * dict.k());
    for atom in dict.atoms() {
        sub_atoms.extend(positions.iter().map(|&p| atom[p]));
    }
    let mut problem = MaskedProblem::new(values, sub_atoms, lambda)?;
    problem.observed_positions = positions;
    Ok(problem)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseCode {
    weights: Vec<f64>,
}

impl SparseCode {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite sparse code"));
        }
        Ok(SparseCode { weights })
    }

    pub fn zeros(k: usize) -> Self {
        SparseCode { weights: vec![0.0; k] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sparsity(&self) -> usize {
        self.weights.iter().filter(|w| w.abs() > SPARSITY_EPS).count()
    }

    pub fn l1(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Keep the objective value after every accepted step.
    pub record_trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tol: 1e-6, max_iters: 5000, record_trace: false }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub code: SparseCode,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Step-size constant actually used (may exceed the power-iteration estimate).
    pub lipschitz: f64,
    pub trace: Vec<f64>,
}

/// `||t - D c||² + λ||c||₁`.
pub fn lasso_objective(problem: &MaskedProblem, code: &SparseCode) -> f64 {
    let mut dc = vec![0.0; problem.rows()];
    problem.apply(code.weights(), &mut dc);
    fidelity(&dc, problem.observed_values()) + problem.lambda * code.l1()
}

/// Largest violation of the subgradient optimality conditions at `code`.
pub fn kkt_residual(problem: &MaskedProblem, code: &SparseCode) -> f64 {
    let mut dc = vec![0.0; problem.rows()];
    problem.apply(code.weights(), &mut dc);
    let mut grad = vec![0.0; problem.k()];
    kkt_from_fit(problem, code.weights(), &dc, &mut grad)
}

fn kkt_from_fit(problem: &MaskedProblem, c: &[f64], dc: &[f64], grad: &mut [f64]) -> f64 {
    let residual: Vec<f64> = dc.iter().zip(problem.observed_values()).map(|(a, b)| a - b).collect();
    problem.apply_t(&residual, grad);
    let lambda = problem.lambda;
    c.iter()
        .zip(grad.iter())
        .map(|(&ci, &gi)| {
            let g = 2.0 * gi;
            if ci != 0.0 {
                (g + lambda * ci.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Gram form of a LASSO problem: `G = DᵀD` plus the step constant
/// `L = 2 λ_max(G)`. One Gram serves every target coded against the same
/// atoms.
#[derive(Debug, Clone)]
pub struct Gram {
    k: usize,
    g: Vec<f64>,
    lipschitz: f64,
}

impl Gram {
    /// Gram of `k` atom-major atoms of length `rows`.
    pub fn from_atoms(atoms: &[f64], rows: usize) -> Self {
        let k = atoms.len() / rows;
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            let ai = &atoms[i * rows..(i + 1) * rows];
            for j in i..k {
                let v = dot(ai, &atoms[j * rows..(j + 1) * rows]);
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        let lipschitz = 2.0 * spectral_norm(&g, k);
        Gram { k, g, lipschitz }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `out = G c`, skipping zero weights.
    fn apply_sparse(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &w) in c.iter().enumerate() {
            if w != 0.0 {
                let col = &self.g[j * self.k..(j + 1) * self.k];
                out.iter_mut().zip(col).for_each(|(o, a)| *o += w * a);
            }
        }
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn spectral_norm(g: &[f64], k: usize) -> f64 {
    let mut v: Vec<f64> = (0..k).map(|i| 1.0 + 0.25 * ((i as f64) * 0.7).sin()).collect();
    let scale = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= scale);
    let mut w = vec![0.0; k];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = dot(&g[i * k..(i + 1) * k], &v);
        }
        let next = dot(&v, &w);
        let wn = dot(&w, &w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / wn);
        let done = (next - estimate).abs() <= POWER_TOL * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Solves the problem by FISTA with step `1/L`, `L` the largest eigenvalue of
/// `2 D_subᵀ D_sub`. A step that would raise the objective resets the
/// momentum, so accepted iterates never increase it.
pub fn solve_lasso(problem: &MaskedProblem, opts: &LassoOptions) -> Result<LassoSolution> {
    let gram = Gram::from_atoms(&problem.sub_atoms, problem.rows());
    let mut corr = vec![0.0; problem.k()];
    problem.apply_t(problem.observed_values(), &mut corr);
    let tt = dot(problem.observed_values(), problem.observed_values());
    let mut sol = solve_gram(&gram, &corr, tt, problem.lambda, opts)?;
    sol.objective = lasso_objective(problem, &sol.code);
    Ok(sol)
}

/// FISTA on `tt - 2 bᵀc + cᵀGc + λ||c||₁`, where `b = Dᵀt` and `tt = tᵀt`.
pub fn solve_gram(gram: &Gram, corr: &[f64], tt: f64, lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let k = gram.k;
    if corr.len() != k {
        return Err(Error::invalid("correlation length differs from the atom count"));
    }
    let b = corr;
    let mut lip = gram.lipschitz;
    let mut x = vec![0.0; k];
    let mut gx = vec![0.0; k];
    let mut fx = tt;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(fx);
    }
    let kkt_at = |x: &[f64], gx: &[f64]| -> f64 {
        x.iter()
            .zip(gx.iter().zip(b))
            .map(|(&xi, (&gi, &bi))| {
                let g = 2.0 * (gi - bi);
                if xi != 0.0 {
                    (g + lambda * xi.signum()).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    };
    let mut kkt = kkt_at(&x, &gx);
    let mut converged = kkt <= opts.tol;
    if lip <= 0.0 {
        // Every atom vanishes on the observed rows: zero is optimal.
        let code = SparseCode { weights: x };
        return Ok(LassoSolution {
            code,
            objective: fx,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
            lipschitz: 0.0,
            trace,
        });
    }

    let mut x_old = x.clone();
    let mut gx_old = gx.clone();
    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut z = vec![0.0; k];
    let mut gz = vec![0.0; k];
    let mut theta = 1.0f64;
    let mut momentum = false;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let step = 1.0 / lip;
        let thresh = lambda * step;
        for i in 0..k {
            z[i] = soft_threshold(y[i] - 2.0 * (gy[i] - b[i]) * step, thresh);
        }
        gram.apply_sparse(&z, &mut gz);
        // F(z) - F(x) written so the two nearly equal objectives never get subtracted.
        let mut delta = 0.0;
        for i in 0..k {
            let d = z[i] - x[i];
            if d != 0.0 {
                delta += d * (gz[i] + gx[i] - 2.0 * b[i]);
            }
            delta += lambda * (z[i].abs() - x[i].abs());
        }

        // A plain proximal step with a valid L provably descends, so an
        // increase at rounding level is a tie.
        let tie = !momentum && delta <= 1e-12 * (1.0 + fx.abs());
        if delta <= 0.0 || tie {
            std::mem::swap(&mut x_old, &mut x);
            std::mem::swap(&mut gx_old, &mut gx);
            x.copy_from_slice(&z);
            gx.copy_from_slice(&gz);
            fx += delta.min(0.0);
            let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
            let beta = (theta - 1.0) / theta_next;
            theta = theta_next;
            momentum = beta != 0.0;
            for i in 0..k {
                y[i] = x[i] + beta * (x[i] - x_old[i]);
                gy[i] = gx[i] + beta * (gx[i] - gx_old[i]);
            }
            if opts.record_trace {
                trace.push(fx);
            }
        } else if momentum {
            theta = 1.0;
            momentum = false;
            y.copy_from_slice(&x);
            gy.copy_from_slice(&gx);
            continue;
        } else {
            let moved = z.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let size = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if moved <= 1e-14 * (1.0 + size) {
                // Fixed point of the proximal map up to rounding.
                break;
            }
            // A plain proximal step from x must descend for a valid L.
            lip *= 1.5;
            continue;
        }

        kkt = kkt_at(&x, &gx);
        converged = kkt <= opts.tol;
    }
    kkt = kkt_at(&x, &gx);
    converged = kkt <= opts.tol;
    let objective = tt - 2.0 * dot(b, &x) + dot(&x, &gx) + lambda * x.iter().map(|v| v.abs()).sum::<f64>();
    Ok(LassoSolution {
        code: SparseCode { weights: x },
        objective,
        kkt_residual: kkt,
        iterations,
        converged,
        lipschitz: lip,
        trace,
    })
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn fidelity(fit: &[f64], target: &[f64]) -> f64 {
    fit.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{gaussian_problem, rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn opts() -> LassoOptions {
        LassoOptions { tol: 1e-9, max_iters: 20_000, record_trace: true }
    }

    #[test]
    fn orthonormal_closed_form() {
        // rotated orthonormal basis in R^4
        let (s, c) = 0.3f64.sin_cos();
        let q = vec![c, s, 0., 0., -s, c, 0., 0., 0., 0., c, -s, 0., 0., s, c];
        let t = vec![1.5, -0.2, 0.7, -2.0];
        let lambda = 0.6;
        let p = MaskedProblem::new(t.clone(), q.clone(), lambda).unwrap();
        let sol = solve_lasso(&p, &opts()).unwrap();
        for j in 0..4 {
            let b = dot(&q[j * 4..j * 4 + 4], &t);
            let expected = b.signum() * (b.abs() - lambda / 2.0).max(0.0);
            assert!((sol.code.weights()[j] - expected).abs() <= 1e-8, "{j}");
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut r = rng(3);
        let p = gaussian_problem(&mut r, 10, 15, 0.0);
        let mut g = vec![0.0; p.k()];
        p.apply_t(p.observed_values(), &mut g);
        let critical = g.iter().map(|v| 2.0 * v.abs()).fold(0.0, f64::max);
        let p = p.with_lambda(critical * 1.01).unwrap();
        let sol = solve_lasso(&p, &LassoOptions::default()).unwrap();
        assert!(sol.code.weights().iter().all(|w| *w == 0.0));
        assert_eq!(kkt_residual(&p, &sol.code), 0.0);
    }

    #[test]
    fn single_atom_least_squares() {
        let t = vec![3.0, 4.0, 12.0];
        let norm = 13.0;
        let p = MaskedProblem::new(t.clone(), t.iter().map(|v| v / norm).collect(), 0.0).unwrap();
        let sol = solve_lasso(&p, &opts()).unwrap();
        assert!((sol.code.weights()[0] - norm).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let p = MaskedProblem::new(vec![1.0], vec![1.0], 0.1).unwrap();
        assert!(solve_lasso(&p, &LassoOptions { tol: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut r = rng(5);
        let p = gaussian_problem(&mut r, 20, 40, 0.01);
        let sol = solve_lasso(&p, &LassoOptions { tol: 1e-14, max_iters: 3, record_trace: false }).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert!(sol.code.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn perturbing_optimum_raises_residual() {
        let mut r = rng(11);
        for _ in 0..20 {
            let p = gaussian_problem(&mut r, 15, 25, 0.2);
            let sol = solve_lasso(&p, &opts()).unwrap();
            assert!(sol.converged);
            let base = kkt_residual(&p, &sol.code);
            let mut w = sol.code.weights().to_vec();
            let j = r.random_range(0..w.len());
            w[j] += if r.random::<bool>() { 0.05 } else { -0.05 };
            let perturbed = kkt_residual(&p, &SparseCode::new(w).unwrap());
            assert!(perturbed > base, "{perturbed} <= {base}");
        }
    }

    #[test]
    fn hundred_random_problems_converge() {
        let mut r = rng(17);
        for _ in 0..100 {
            let rows = r.random_range(2..=20);
            let k = r.random_range(1..=40);
            let lambda = r.random_range(0.01..1.0);
            let p = gaussian_problem(&mut r, rows, k, lambda);
            let sol = solve_lasso(&p, &LassoOptions::default()).unwrap();
            assert!(sol.converged, "rows {rows} k {k}: kkt {}", sol.kkt_residual);
            assert!(kkt_residual(&p, &sol.code) <= 1e-6);
            assert!(sol.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn extract_counts_rows() {
        let d = crate::test_util::random_dictionary(&mut rng(1), 91, 30);
        let t = EdmVector::new((0..91).map(|i| i as f64).collect()).unwrap();
        let full = extract_subproblem(&t, &JointMask::empty(), &d, 0.1).unwrap();
        assert_eq!(full.rows(), 91);
        assert_eq!(full.sub_atom(4), d.atom(4));
        assert_eq!(extract_subproblem(&t, &JointMask::new([3], 14).unwrap(), &d, 0.1).unwrap().rows(), 78);
        let p = extract_subproblem(&t, &JointMask::new([0, 7, 13], 14).unwrap(), &d, 0.1).unwrap();
        assert_eq!(p.rows(), 55);
        assert!(p.observed_positions().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.observed_values()[0], t.as_slice()[p.observed_positions()[0]]);
        let nearly_all = JointMask::new(1..14, 14).unwrap();
        assert!(matches!(extract_subproblem(&t, &nearly_all, &d, 0.1), Err(Error::EmptyProblem)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn objective_trace_is_monotone(seed in 0u64..10_000, rows in 2usize..20, k in 1usize..40) {
            let p = gaussian_problem(&mut rng(seed), rows, k, 0.1);
            let sol = solve_lasso(&p, &LassoOptions { record_trace: true, ..Default::default() }).unwrap();
            prop_assert!(sol.trace.windows(2).all(|w| w[1] <= w[0]));
        }

        // Scaling data and penalty together scales the minimizer.
        #[test]
        fn homogeneous_in_data_and_lambda(seed in 0u64..10_000, s in 0.2f64..5.0) {
            let p = gaussian_problem(&mut rng(seed), 12, 6, 0.3);
            let scaled = MaskedProblem::new(
                p.observed_values().iter().map(|v| v * s).collect(),
                (0..p.k()).flat_map(|j| p.sub_atom(j).to_vec()).collect(),
                0.3 * s,
            ).unwrap();
            let tight = LassoOptions { tol: 1e-10, max_iters: 50_000, record_trace: false };
            let a = solve_lasso(&p, &tight).unwrap();
            let b = solve_lasso(&scaled, &tight).unwrap();
            prop_assume!(a.converged && b.converged);
            for (x, y) in a.code.weights().iter().zip(b.code.weights()) {
                prop_assert!((x * s - y).abs() <= 1e-6 * (1.0 + s));
            }
        }
    }
}
