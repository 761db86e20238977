//! Accelerated proximal gradient for
//! `Σ_s w_s/2 ‖y^s − X^s α^s‖² + λ·Penalty(A)`.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::QualityWeights;
use crate::model::{CoefficientMatrix, MultimodalDictionary, MultimodalSample, TreeGroupStructure};
use crate::prox;

/// Number of consecutive small relative changes required to stop.
const STALL_WINDOW: usize = 5;

/// Sparsity pattern enforced by the penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    /// `Σ_s ‖α^s‖₁`: independent sparse codes per modality.
    L1PerModality,
    /// `Σ_j ‖a_j‖₂`: shared row support across all modalities.
    Joint,
    /// `Σ_j Σ_g ω_g ‖a_{jg}‖₂` over a laminar family of modality groups.
    Tree(TreeGroupStructure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPrior {
    pub kind: PriorKind,
    pub lambda: f64,
}

impl SparsityPrior {
    pub fn new(kind: PriorKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::param(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(SparsityPrior { kind, lambda })
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(PriorKind::L1PerModality, lambda)
    }

    pub fn joint(lambda: f64) -> Result<Self> {
        Self::new(PriorKind::Joint, lambda)
    }

    pub fn tree(tree: TreeGroupStructure, lambda: f64) -> Result<Self> {
        Self::new(PriorKind::Tree(tree), lambda)
    }

    /// Penalty value without the λ factor.
    pub fn penalty(&self, a: ArrayView2<'_, f64>) -> f64 {
        match &self.kind {
            PriorKind::L1PerModality => prox::l1_penalty(a),
            PriorKind::Joint => prox::joint_penalty(a),
            PriorKind::Tree(tree) => prox::tree_penalty(a, tree),
        }
    }

    /// `prox_{λ·step·Penalty}` applied in place.
    fn prox_inplace(&self, v: &mut Array2<f64>, step: f64) {
        let tau = self.lambda * step;
        match &self.kind {
            PriorKind::L1PerModality => v.mapv_inplace(|x| prox::soft_threshold_scalar(x, tau)),
            PriorKind::Joint => {
                for row in v.rows_mut() {
                    prox::group_soft_threshold_inplace(row, tau);
                }
            }
            PriorKind::Tree(tree) => prox::prox_tree_inplace(v, tree, tau),
        }
    }

    fn check(&self, num_modalities: usize) -> Result<()> {
        if let PriorKind::Tree(tree) = &self.kind {
            if tree.num_modalities() != num_modalities {
                return Err(Error::dim(format!(
                    "tree covers {} modalities, dictionary has {num_modalities}",
                    tree.num_modalities()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step `1/L`, with `L` from [`lipschitz_step`].
    Lipschitz,
    Fixed {
        step: f64,
    },
    Backtracking {
        initial: f64,
        shrink: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Relative objective change below which an iteration counts as stalled.
    pub tolerance: f64,
    pub step: StepRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 500,
            tolerance: 1e-8,
            step: StepRule::Lipschitz,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::param("solver tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        match self.step {
            StepRule::Lipschitz => {}
            StepRule::Fixed { step } => {
                if !(step > 0.0) {
                    return Err(Error::param("step must be positive"));
                }
            }
            StepRule::Backtracking { initial, shrink } => {
                if !(initial > 0.0) {
                    return Err(Error::param("initial step must be positive"));
                }
                if !(shrink > 0.0 && shrink < 1.0) {
                    return Err(Error::param("shrink factor must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub coefficients: CoefficientMatrix,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every iteration.
    pub trace: Vec<f64>,
}

/// The smooth data term and its per-modality weights.
struct DataTerm<'a> {
    dictionary: &'a MultimodalDictionary,
    sample: &'a MultimodalSample,
    weights: Vec<f64>,
}

impl<'a> DataTerm<'a> {
    fn new(
        dictionary: &'a MultimodalDictionary,
        sample: &'a MultimodalSample,
        weights: Option<&QualityWeights>,
    ) -> Result<Self> {
        dictionary.check_sample(sample)?;
        let s = dictionary.num_modalities();
        let weights = match weights {
            Some(q) => {
                if q.len() != s {
                    return Err(Error::dim(format!(
                        "{} quality weights for {s} modalities",
                        q.len()
                    )));
                }
                q.data_weights()
            }
            None => vec![1.0; s],
        };
        Ok(DataTerm {
            dictionary,
            sample,
            weights,
        })
    }

    fn residual(&self, a: ArrayView2<'_, f64>, s: usize) -> Array1<f64> {
        &self.sample.modality(s) - &self.dictionary.atoms(s).dot(&a.column(s))
    }

    fn value(&self, a: ArrayView2<'_, f64>) -> f64 {
        (0..self.weights.len())
            .map(|s| {
                let r = self.residual(a, s);
                0.5 * self.weights[s] * r.dot(&r)
            })
            .sum()
    }

    /// `X^s α^s` per modality.
    fn fitted(&self, a: ArrayView2<'_, f64>) -> Vec<Array1<f64>> {
        (0..self.weights.len())
            .map(|s| self.dictionary.atoms(s).dot(&a.column(s)))
            .collect()
    }

    fn value_fitted(&self, fit: &[Array1<f64>]) -> f64 {
        fit.iter()
            .enumerate()
            .map(|(s, f)| {
                let r = &self.sample.modality(s) - f;
                0.5 * self.weights[s] * r.dot(&r)
            })
            .sum()
    }

    fn value_and_grad_fitted(
        &self,
        fit: &[Array1<f64>],
        shape: (usize, usize),
    ) -> (f64, Array2<f64>) {
        let mut grad = Array2::zeros(shape);
        let mut value = 0.0;
        for (s, &w) in self.weights.iter().enumerate() {
            let r = &self.sample.modality(s) - &fit[s];
            value += 0.5 * w * r.dot(&r);
            let g = self.dictionary.atoms(s).t().dot(&r) * (-w);
            grad.column_mut(s).assign(&g);
        }
        (value, grad)
    }

    fn value_and_grad(&self, a: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        let mut grad = Array2::zeros(a.raw_dim());
        let mut value = 0.0;
        for (s, &w) in self.weights.iter().enumerate() {
            let r = self.residual(a, s);
            value += 0.5 * w * r.dot(&r);
            let g = self.dictionary.atoms(s).t().dot(&r) * (-w);
            grad.column_mut(s).assign(&g);
        }
        (value, grad)
    }
}

/// Full objective: weighted reconstruction error plus `λ·Penalty(A)`.
pub fn objective(
    a: &CoefficientMatrix,
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    prior: &SparsityPrior,
    weights: Option<&QualityWeights>,
) -> Result<f64> {
    dictionary.check_coefficients(a)?;
    prior.check(dictionary.num_modalities())?;
    let data = DataTerm::new(dictionary, sample, weights)?;
    Ok(data.value(a.view()) + prior.lambda * prior.penalty(a.view()))
}

/// Gradient of the weighted reconstruction error; column `s` is
/// `−w_s (X^s)ᵀ (y^s − X^s α^s)`.
pub fn grad_f(
    a: &CoefficientMatrix,
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    weights: Option<&QualityWeights>,
) -> Result<Array2<f64>> {
    dictionary.check_coefficients(a)?;
    let data = DataTerm::new(dictionary, sample, weights)?;
    Ok(data.value_and_grad(a.view()).1)
}

/// Largest eigenvalue of `XᵀX` by power iteration.
pub fn spectral_norm_sq(x: ArrayView2<'_, f64>, max_iterations: usize, tolerance: f64) -> f64 {
    let n = x.ncols();
    if n == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..max_iterations {
        let w = x.t().dot(&x.dot(&v));
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let done = (next - estimate).abs() <= tolerance * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient of the final vector
    let xv = x.dot(&v);
    xv.dot(&xv).max(estimate)
}

/// Squared spectral norm of every modality's dictionary, cached on the
/// dictionary.
pub fn modality_spectral_norms(dictionary: &MultimodalDictionary) -> &[f64] {
    dictionary.spectral_cache().get_or_init(|| {
        (0..dictionary.num_modalities())
            .map(|s| spectral_norm_sq(dictionary.atoms(s), 1000, 1e-14))
            .collect()
    })
}

/// `1/L` with `L = max_s w_s σ_max(X^s)²`.
pub fn lipschitz_step(dictionary: &MultimodalDictionary, weights: Option<&QualityWeights>) -> f64 {
    let norms = modality_spectral_norms(dictionary);
    let w = weights.map(|q| q.data_weights());
    let lipschitz = norms
        .iter()
        .enumerate()
        .map(|(s, &n)| w.as_ref().map_or(1.0, |w| w[s]) * n)
        .fold(0.0, f64::max);
    1.0 / lipschitz
}

/// One backtracking proximal-gradient step from `b`, shrinking `step` until
/// the quadratic upper bound holds. Returns the new point and accepted step.
pub fn backtracking_step(
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    prior: &SparsityPrior,
    weights: Option<&QualityWeights>,
    b: &CoefficientMatrix,
    step: f64,
    shrink: f64,
) -> Result<(CoefficientMatrix, f64)> {
    dictionary.check_coefficients(b)?;
    prior.check(dictionary.num_modalities())?;
    let data = DataTerm::new(dictionary, sample, weights)?;
    let (f_b, grad) = data.value_and_grad(b.view());
    let floor = lipschitz_step(dictionary, weights);
    let (next, step) = backtrack(&data, prior, b.view(), f_b, &grad, step, shrink, floor, 0)?;
    Ok((CoefficientMatrix::new(next), step))
}

/// Shrinks `step` until the quadratic upper bound holds. Steps at or below
/// `floor` (the Lipschitz step) satisfy the bound exactly, so a violation
/// there is rounding and the step is accepted.
#[allow(clippy::too_many_arguments)]
fn backtrack(
    data: &DataTerm<'_>,
    prior: &SparsityPrior,
    b: ArrayView2<'_, f64>,
    f_b: f64,
    grad: &Array2<f64>,
    mut step: f64,
    shrink: f64,
    floor: f64,
    iteration: usize,
) -> Result<(Array2<f64>, f64)> {
    loop {
        let next = gradient_prox(prior, b, grad, step);
        let mut inner = 0.0;
        let mut dist = 0.0;
        Zip::from(&next).and(&b).and(grad).for_each(|&n, &b, &g| {
            inner += g * (n - b);
            dist += (n - b) * (n - b);
        });
        let f_next = data.value(next.view());
        if !f_next.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        // relative slack absorbs rounding when the step is already valid
        let bound = f_b + inner + dist / (2.0 * step);
        if f_next <= bound + 1e-15 * f_b.abs() || step <= floor {
            return Ok((next, step));
        }
        step = (step * shrink).max(floor);
    }
}

fn gradient_prox(
    prior: &SparsityPrior,
    b: ArrayView2<'_, f64>,
    grad: &Array2<f64>,
    step: f64,
) -> Array2<f64> {
    let mut v = &b - &(grad * step);
    prior.prox_inplace(&mut v, step);
    v
}

/// Minimises the objective by accelerated proximal gradient with
/// extrapolation `k/(k+3)`, starting from `initial` (zero when absent).
///
/// Stops once the relative objective change stays below the tolerance for
/// five consecutive iterations, or at the iteration cap. The best iterate
/// seen (the initial point included) is returned.
pub fn solve(
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    prior: &SparsityPrior,
    settings: &SolverSettings,
    weights: Option<&QualityWeights>,
    initial: Option<&CoefficientMatrix>,
) -> Result<SolveResult> {
    settings.validate()?;
    prior.check(dictionary.num_modalities())?;
    let data = DataTerm::new(dictionary, sample, weights)?;
    let shape = (dictionary.num_atoms(), dictionary.num_modalities());
    let start = match initial {
        Some(a) => {
            dictionary.check_coefficients(a)?;
            a.as_array().clone()
        }
        None => Array2::zeros(shape),
    };

    let full = |a: ArrayView2<'_, f64>| data.value(a) + prior.lambda * prior.penalty(a);

    let (mut step, shrink) = match settings.step {
        StepRule::Lipschitz => (lipschitz_step(dictionary, weights), None),
        StepRule::Fixed { step } => (step, None),
        StepRule::Backtracking { initial, shrink } => (initial, Some(shrink)),
    };
    let floor = match shrink {
        Some(_) => lipschitz_step(dictionary, weights),
        None => 0.0,
    };

    let initial_objective = full(start.view());
    if !initial_objective.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut best = (initial_objective, start.clone());
    // X·b follows from the fits of the last two iterates since b is affine in them
    let mut fit_previous = data.fitted(start.view());
    let mut fit_current = fit_previous.clone();
    let mut previous = start.clone();
    let mut current = start;
    let mut last = initial_objective;
    let mut trace = Vec::new();
    let mut stalled = 0;

    for k in 0..settings.max_iterations {
        let rho = k as f64 / (k as f64 + 3.0);
        let b = &current + &((&current - &previous) * rho);
        let fit_b: Vec<Array1<f64>> = fit_current
            .iter()
            .zip(&fit_previous)
            .map(|(c, p)| c + &((c - p) * rho))
            .collect();
        let (f_b, grad) = data.value_and_grad_fitted(&fit_b, shape);
        let next = match shrink {
            Some(shrink) => {
                let (next, accepted) =
                    backtrack(&data, prior, b.view(), f_b, &grad, step, shrink, floor, k)?;
                step = accepted;
                next
            }
            None => gradient_prox(prior, b.view(), &grad, step),
        };
        let fit_next = data.fitted(next.view());
        let value = data.value_fitted(&fit_next) + prior.lambda * prior.penalty(next.view());
        if !value.is_finite() {
            return Err(Error::NonFinite { iteration: k });
        }
        trace.push(value);
        if value < best.0 {
            best = (value, next.clone());
        }

        let change = (value - last).abs() / last.abs().max(f64::MIN_POSITIVE);
        last = value;
        previous = std::mem::replace(&mut current, next);
        fit_previous = std::mem::replace(&mut fit_current, fit_next);
        if change < settings.tolerance {
            stalled += 1;
            if stalled >= STALL_WINDOW {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    Ok(SolveResult {
        coefficients: CoefficientMatrix::new(best.1),
        objective: best.0,
        iterations: trace.len(),
        trace,
    })
}
