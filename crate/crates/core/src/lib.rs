//! Multimodal sparse representation classification with tree-structured
//! group sparsity across modalities and possibilistic quality weights.
//!
//! A test sample is coded jointly over per-modality dictionaries built from
//! training samples; the class with the smallest class-restricted
//! reconstruction error wins.

// negated comparisons are how parameter checks reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classify;
pub mod error;
pub mod fusion;
pub mod model;
pub mod oracle;
pub mod prox;
pub mod solver;

pub use classify::{classify_pipeline, ClassificationResult, Classifier, ClassifySettings, Method};
pub use error::{Error, Result};
pub use fusion::{solve_weighted, FusionResult, FusionSettings, QualityWeights};
pub use model::{
    build_dictionary, validate_tree, CoefficientMatrix, Group, MultimodalDictionary,
    MultimodalSample, TreeFile, TreeGroupStructure,
};
pub use prox::{prox_tree, ProxProblem};
pub use solver::{solve, PriorKind, SolveResult, SolverSettings, SparsityPrior, StepRule};
