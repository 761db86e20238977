//! Possibilistic quality weighting of modalities.
//!
//! Coefficients and per-modality weights `μ^s ∈ (0, 1]` are found by
//! alternating minimisation of
//!
//! ```text
//! Σ_s (μ^s)^m/2 ‖y^s − X^s α^s‖² + λ·Penalty(A) + Σ_s λ_μ^s/2 (1 − μ^s)^m
//! ```
//!
//! The μ-step has the closed form `μ = 1 / (1 + (r/λ_μ)^(1/(m−1)))`, and
//! `λ_μ^s` is fixed to the residual of an initial unweighted solve, so every
//! modality starts at `μ = 0.5`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientMatrix, MultimodalDictionary, MultimodalSample};
use crate::solver::{self, SolverSettings, SparsityPrior};

/// Floor applied to the regularizers so a perfect initial fit stays usable.
pub const REGULARIZER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub mu: Vec<f64>,
    pub regularizers: Vec<f64>,
    pub fuzzifier: f64,
}

impl QualityWeights {
    pub fn new(mu: Vec<f64>, regularizers: Vec<f64>, fuzzifier: f64) -> Result<Self> {
        if mu.len() != regularizers.len() {
            return Err(Error::dim(format!(
                "{} weights but {} regularizers",
                mu.len(),
                regularizers.len()
            )));
        }
        if !(fuzzifier > 1.0) || !fuzzifier.is_finite() {
            return Err(Error::param(format!(
                "fuzzifier must exceed 1, got {fuzzifier}"
            )));
        }
        if regularizers.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::param("weight regularizers must be positive"));
        }
        if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::param("quality weights must be positive"));
        }
        Ok(QualityWeights {
            mu,
            regularizers,
            fuzzifier,
        })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Data-term weights `(μ^s)^m`.
    pub fn data_weights(&self) -> Vec<f64> {
        self.mu.iter().map(|m| m.powf(self.fuzzifier)).collect()
    }

    /// `Σ_s λ_μ^s/2 (1 − μ^s)^m`.
    pub fn penalty(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.regularizers)
            .map(|(m, l)| 0.5 * l * (1.0 - m).abs().powf(self.fuzzifier))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    /// Number of weight/coefficient alternations.
    pub alternations: usize,
    pub fuzzifier: f64,
    pub solver: SolverSettings,
    /// Replaces the residual-based regularizers when set.
    pub regularizers: Option<Vec<f64>>,
    /// Weights for the first coefficient update, in place of the closed form.
    pub initial_weights: Option<Vec<f64>>,
}

impl Default for FusionSettings {
    fn default() -> Self {
        FusionSettings {
            alternations: 10,
            fuzzifier: 2.0,
            solver: SolverSettings::default(),
            regularizers: None,
            initial_weights: None,
        }
    }
}

impl FusionSettings {
    pub fn validate(&self) -> Result<()> {
        if self.alternations == 0 {
            return Err(Error::param("at least one alternation is required"));
        }
        if !(self.fuzzifier > 1.0) || !self.fuzzifier.is_finite() {
            return Err(Error::param(format!(
                "fuzzifier must exceed 1, got {}",
                self.fuzzifier
            )));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub coefficients: CoefficientMatrix,
    pub weights: QualityWeights,
    /// Composite objective after each alternation.
    pub trace: Vec<f64>,
}

/// Squared reconstruction error `‖y^s − X^s α^s‖²` per modality.
pub fn modality_residuals(
    a: &CoefficientMatrix,
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
) -> Result<Vec<f64>> {
    dictionary.check_coefficients(a)?;
    dictionary.check_sample(sample)?;
    Ok((0..dictionary.num_modalities())
        .map(|s| {
            let r = &sample.modality(s) - &dictionary.atoms(s).dot(&a.column(s));
            r.dot(&r)
        })
        .collect())
}

pub fn init_regularizers(residuals: &[f64]) -> Vec<f64> {
    residuals
        .iter()
        .map(|&r| r.max(REGULARIZER_FLOOR))
        .collect()
}

/// Closed-form μ-step.
pub fn update_weights(residuals: &[f64], regularizers: &[f64], fuzzifier: f64) -> Vec<f64> {
    let exponent = 1.0 / (fuzzifier - 1.0);
    residuals
        .iter()
        .zip(regularizers)
        .map(|(&r, &l)| 1.0 / (1.0 + (r / l).powf(exponent)))
        .collect()
}

/// Value of the composite weighted objective.
pub fn composite_objective(
    a: &CoefficientMatrix,
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    prior: &SparsityPrior,
    weights: &QualityWeights,
) -> Result<f64> {
    Ok(solver::objective(a, dictionary, sample, prior, Some(weights))? + weights.penalty())
}

/// Alternates the μ-step and a warm-started coefficient solve.
pub fn solve_weighted(
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    prior: &SparsityPrior,
    settings: &FusionSettings,
) -> Result<FusionResult> {
    settings.validate()?;
    let s = dictionary.num_modalities();
    let unweighted = solver::solve(dictionary, sample, prior, &settings.solver, None, None)?;
    let mut a = unweighted.coefficients;

    let regularizers = match &settings.regularizers {
        Some(r) if r.len() != s => {
            return Err(Error::dim(format!(
                "{} regularizers for {s} modalities",
                r.len()
            )))
        }
        Some(r) => r.clone(),
        None => init_regularizers(&modality_residuals(&a, dictionary, sample)?),
    };

    let mut trace = Vec::with_capacity(settings.alternations);
    let mut weights = None;
    for k in 0..settings.alternations {
        let mu = match (&settings.initial_weights, k) {
            (Some(mu), 0) => mu.clone(),
            _ => update_weights(
                &modality_residuals(&a, dictionary, sample)?,
                &regularizers,
                settings.fuzzifier,
            ),
        };
        let q = QualityWeights::new(mu, regularizers.clone(), settings.fuzzifier)?;
        let step = solver::solve(
            dictionary,
            sample,
            prior,
            &settings.solver,
            Some(&q),
            Some(&a),
        )?;
        a = step.coefficients;
        trace.push(step.objective + q.penalty());
        weights = Some(q);
    }

    Ok(FusionResult {
        coefficients: a,
        weights: weights.expect("at least one alternation"),
        trace,
    })
}
