//! Evaluation harness: synthetic data, corruption, metrics, dataset I/O and
//! experiment runner.

pub mod dataset;
pub mod experiment;
pub mod json;
pub mod metrics;
pub mod perturb;
pub mod random;
pub mod synth;

pub use dataset::{load_dataset, write_dataset, Manifest, ModalityFiles};
pub use experiment::{
    load_source, run_experiment, run_experiment_on, DatasetSource, ExperimentConfig,
    ExperimentOutcome, FusionConfig, PerturbationSweep, PointReport, SplitMode, SummaryEntry,
    SweepKind,
};
pub use json::to_canonical_string;
pub use metrics::{compute_metrics, MetricsReport};
pub use perturb::{perturb, Perturbation};
pub use synth::{synth_generate, Dataset, LabeledSet, SyntheticSpec};
