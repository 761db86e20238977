//! Slow reference solvers used to check the production operators.
//!
//! Nothing here calls into `prox` or `solver`: objectives, subgradients and
//! group structures are rebuilt from scratch. Every problem is written as
//!
//! ```text
//! F(x) = ½ xᵀHx − bᵀx + c + Σ_t w_t ‖x_{I_t}‖₂
//! ```
//!
//! and minimised in two phases: plain subgradient descent with steps
//! `c/√k` (best iterate kept), then Newton's method on the smoothed
//! objective `Σ_t w_t √(‖x_{I_t}‖² + ε²)` with ε driven down to
//! [`FINAL_SMOOTHING`]. The smoothed minimiser is suboptimal for `F` by at
//! most `ε·Σ_t w_t`, which is reported as the certificate.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{MultimodalDictionary, MultimodalSample, TreeGroupStructure};
use crate::solver::{PriorKind, SparsityPrior};

pub const PROX_SUBGRADIENT_ITERATIONS: usize = 200_000;
pub const FINAL_SMOOTHING: f64 = 1e-12;
const MAX_PROX_DIM: usize = 6;
const MAX_ATOMS: usize = 30;
const MAX_MODALITIES: usize = 4;
const WEIGHT_GRID_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
struct Term {
    idx: Vec<usize>,
    weight: f64,
}

/// Quadratic plus weighted group norms over a flat variable vector.
#[derive(Debug, Clone)]
struct Composite {
    dim: usize,
    // row-major dim × dim
    hess: Vec<f64>,
    lin: Vec<f64>,
    constant: f64,
    terms: Vec<Term>,
    // per-term scratch offsets are recomputed; terms are tiny
}

impl Composite {
    fn quad_grad(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.hess.chunks(self.dim))
            .zip(&self.lin)
        {
            *o = row.iter().zip(x).map(|(h, x)| h * x).sum::<f64>() - b;
        }
    }

    fn value(&self, x: &[f64], eps: f64) -> f64 {
        let mut hx = vec![0.0; self.dim];
        self.quad_grad(x, &mut hx);
        // ½xᵀHx − bᵀx = ½xᵀ(Hx − b) − ½bᵀx
        let quad: f64 = x
            .iter()
            .zip(&hx)
            .zip(&self.lin)
            .map(|((x, g), b)| 0.5 * x * g - 0.5 * b * x)
            .sum();
        let norms: f64 = self
            .terms
            .iter()
            .map(|t| {
                let sq: f64 = t.idx.iter().map(|&i| x[i] * x[i]).sum();
                t.weight * (sq + eps * eps).sqrt()
            })
            .sum();
        quad + self.constant + norms
    }

    fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Subgradient descent from `x0`; returns the best iterate and its value.
    fn subgradient_descent(&self, x0: &[f64], iterations: usize, scale: f64) -> (Vec<f64>, f64) {
        let mut x = x0.to_vec();
        let mut g = vec![0.0; self.dim];
        let mut best = (x.clone(), self.value(&x, 0.0));
        for k in 1..=iterations {
            self.quad_grad(&x, &mut g);
            for t in &self.terms {
                let norm = t.idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for &i in &t.idx {
                        g[i] += t.weight * x[i] / norm;
                    }
                }
            }
            let step = scale / (k as f64).sqrt();
            for (x, g) in x.iter_mut().zip(&g) {
                *x -= step * g;
            }
            let f = self.value(&x, 0.0);
            if f < best.1 {
                best = (x.clone(), f);
            }
        }
        best
    }

    fn smoothed_derivatives(&self, x: &DVector<f64>, eps: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        let mut hess = DMatrix::from_row_slice(n, n, &self.hess);
        let mut grad = &hess * x - DVector::from_column_slice(&self.lin);
        for t in &self.terms {
            let sq: f64 = t.idx.iter().map(|&i| x[i] * x[i]).sum();
            let phi = (sq + eps * eps).sqrt();
            for &i in &t.idx {
                grad[i] += t.weight * x[i] / phi;
                for &j in &t.idx {
                    let delta = if i == j { 1.0 / phi } else { 0.0 };
                    hess[(i, j)] += t.weight * (delta - x[i] * x[j] / (phi * phi * phi));
                }
            }
        }
        (grad, hess)
    }

    /// Damped Newton on the ε-smoothed objective. Returns the point and the
    /// final Newton decrement.
    fn newton(&self, x0: Vec<f64>, eps: f64) -> (Vec<f64>, f64) {
        let mut x = DVector::from_vec(x0);
        let mut decrement = f64::INFINITY;
        for _ in 0..300 {
            let f = self.value(x.as_slice(), eps);
            let (grad, hess) = self.smoothed_derivatives(&x, eps);
            let Some(dir) = damped_solve(hess, &grad) else {
                break;
            };
            decrement = -grad.dot(&dir);
            if !(decrement > 2e-16 * f.abs().max(1.0)) {
                decrement = decrement.max(0.0);
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-20 {
                let trial = &x + &dir * step;
                if self.value(trial.as_slice(), eps) <= f - 0.25 * step * decrement {
                    x = trial;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (x.as_slice().to_vec(), decrement)
    }

    /// Both phases; returns the best point found, its exact objective and
    /// the certificate bound on its suboptimality.
    fn minimize(&self, x0: &[f64], iterations: usize, scale: f64) -> Result<(Vec<f64>, f64, f64)> {
        let (mut best_x, mut best_f) = self.subgradient_descent(x0, iterations, scale);
        let mut x = best_x.clone();
        let mut eps = 1e-2;
        let mut decrement;
        loop {
            (x, decrement) = self.newton(x, eps);
            if eps <= FINAL_SMOOTHING {
                break;
            }
            eps = (eps * 0.1).max(FINAL_SMOOTHING);
        }
        let tolerance = 1e-9 * best_f.abs().max(1.0);
        if !(decrement <= tolerance) {
            return Err(Error::OracleBudget(format!(
                "Newton decrement {decrement:.3e} above {tolerance:.3e} at ε = {FINAL_SMOOTHING:e}"
            )));
        }
        let f = self.value(&x, 0.0);
        if f < best_f {
            best_f = f;
            best_x = x;
        }
        Ok((best_x, best_f, eps * self.total_weight() + decrement))
    }
}

fn damped_solve(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1.0);
    let mut damping = 0.0;
    for _ in 0..40 {
        if let Some(chol) = hess.clone().cholesky() {
            let dir = chol.solve(&(-grad));
            if dir.iter().all(|v| v.is_finite()) {
                return Some(dir);
            }
        }
        let next = if damping == 0.0 {
            1e-14 * scale
        } else {
            damping * 10.0
        };
        for i in 0..hess.nrows() {
            hess[(i, i)] += next - damping;
        }
        damping = next;
    }
    None
}

fn tree_terms(tree: &TreeGroupStructure, var: impl Fn(usize) -> usize, scale: f64) -> Vec<Term> {
    tree.groups()
        .iter()
        .map(|g| Term {
            idx: g.members.iter().map(|&m| var(m)).collect(),
            weight: scale * g.weight,
        })
        .collect()
}

/// Numerical minimiser of `Σ_g ω_g ‖u_g‖₂ + ‖u − v‖² / (2β)` for one row.
pub fn prox_numeric(
    v: ArrayView1<'_, f64>,
    tree: &TreeGroupStructure,
    beta: f64,
) -> Result<Array1<f64>> {
    prox_numeric_with(v, tree, beta, PROX_SUBGRADIENT_ITERATIONS)
}

pub fn prox_numeric_with(
    v: ArrayView1<'_, f64>,
    tree: &TreeGroupStructure,
    beta: f64,
    iterations: usize,
) -> Result<Array1<f64>> {
    let dim = v.len();
    if dim > MAX_PROX_DIM {
        return Err(Error::dim(format!(
            "prox oracle supports at most {MAX_PROX_DIM} coordinates"
        )));
    }
    if dim != tree.num_modalities() {
        return Err(Error::dim("row length does not match tree"));
    }
    if !(beta > 0.0) {
        return Err(Error::param("beta must be positive"));
    }
    let mut hess = vec![0.0; dim * dim];
    for i in 0..dim {
        hess[i * dim + i] = 1.0 / beta;
    }
    let problem = Composite {
        dim,
        hess,
        lin: v.iter().map(|x| x / beta).collect(),
        constant: v.dot(&v) / (2.0 * beta),
        terms: tree_terms(tree, |m| m, 1.0),
    };
    let start: Vec<f64> = v.to_vec();
    let (x, _, _) = problem.minimize(&start, iterations, beta)?;
    Ok(Array1::from(x))
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub objective: f64,
    pub coefficients: Array2<f64>,
    /// Upper bound on `objective − optimum` from the smoothing argument.
    pub certificate: f64,
}

/// Reference minimiser of `½Σ_s ‖y^s − X^s α^s‖² + λ·Penalty(A)`.
pub fn solve_subgradient(
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    prior: &SparsityPrior,
    iterations: usize,
) -> Result<OracleSolution> {
    let n_atoms = dictionary.num_atoms();
    let n_mod = dictionary.num_modalities();
    if n_atoms > MAX_ATOMS || n_mod > MAX_MODALITIES {
        return Err(Error::dim(format!(
            "oracle supports N ≤ {MAX_ATOMS}, S ≤ {MAX_MODALITIES}"
        )));
    }
    dictionary.check_sample(sample)?;
    let dim = n_atoms * n_mod;
    let var = |j: usize, s: usize| s * n_atoms + j;

    let mut hess = vec![0.0; dim * dim];
    let mut lin = vec![0.0; dim];
    let mut constant = 0.0;
    for s in 0..n_mod {
        let x = dictionary.atoms(s);
        let y = sample.modality(s);
        let gram = x.t().dot(&x);
        let xty = x.t().dot(&y);
        for i in 0..n_atoms {
            lin[var(i, s)] = xty[i];
            for j in 0..n_atoms {
                hess[var(i, s) * dim + var(j, s)] = gram[[i, j]];
            }
        }
        constant += 0.5 * y.dot(&y);
    }

    let lambda = prior.lambda;
    let terms: Vec<Term> = match &prior.kind {
        PriorKind::L1PerModality => (0..dim)
            .map(|i| Term {
                idx: vec![i],
                weight: lambda,
            })
            .collect(),
        PriorKind::Joint => (0..n_atoms)
            .map(|j| Term {
                idx: (0..n_mod).map(|s| var(j, s)).collect(),
                weight: lambda,
            })
            .collect(),
        PriorKind::Tree(tree) => {
            if tree.num_modalities() != n_mod {
                return Err(Error::dim("tree does not match modality count"));
            }
            (0..n_atoms)
                .flat_map(|j| tree_terms(tree, move |s| var(j, s), lambda))
                .collect()
        }
    };

    // 1/‖H‖_∞ bounds the reciprocal curvature
    let row_sum = (0..dim)
        .map(|i| {
            hess[i * dim..(i + 1) * dim]
                .iter()
                .map(|h| h.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        .max(1e-12);
    let problem = Composite {
        dim,
        hess,
        lin,
        constant,
        terms,
    };
    let (x, objective, certificate) =
        problem.minimize(&vec![0.0; dim], iterations, 1.0 / row_sum)?;
    let coefficients = Array2::from_shape_fn((n_atoms, n_mod), |(j, s)| x[var(j, s)]);
    Ok(OracleSolution {
        objective,
        coefficients,
        certificate,
    })
}

/// Grid minimiser of `μ^m r/2 + λ_μ/2 |1 − μ|^m` over `μ ∈ [0, 1.5]`.
pub fn weight_grid_search(residual: f64, regularizer: f64, fuzzifier: f64) -> f64 {
    let cost = |mu: f64| {
        0.5 * mu.powf(fuzzifier) * residual + 0.5 * regularizer * (1.0 - mu).abs().powf(fuzzifier)
    };
    let steps = (1.5 / WEIGHT_GRID_STEP).round() as usize;
    let mut best = (0.0, cost(0.0));
    for k in 1..=steps {
        let mu = k as f64 * WEIGHT_GRID_STEP;
        let c = cost(mu);
        if c < best.1 {
            best = (mu, c);
        }
    }
    best.0
}
