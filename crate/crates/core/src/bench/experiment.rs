//! Declarative experiments: methods × perturbation levels × folds.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::load_dataset;
use super::metrics::{compute_metrics, MetricsReport};
use super::perturb::{perturb, Perturbation};
use super::synth::{synth_generate, Dataset, LabeledSet, SyntheticSpec};
use crate::classify::{ClassificationResult, Classifier, ClassifySettings, Method};
use crate::error::{Error, Result};
use crate::fusion::FusionSettings;
use crate::model::TreeFile;
use crate::solver::SolverSettings;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// Path to a dataset manifest.
    Manifest(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// The dataset's own train/test split.
    Holdout,
    /// Train and test pooled, then split into stratified folds.
    KFold { folds: usize },
    /// Two folds: train→test, then the roles swapped.
    TwoWaySwap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSweep {
    /// 1-based modality to corrupt.
    pub modality: usize,
    pub kind: SweepKind,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Gaussian,
    ZeroBlock,
}

impl SweepKind {
    fn at(self, level: f64) -> Perturbation {
        match self {
            SweepKind::Gaussian => Perturbation::Gaussian { sigma: level },
            SweepKind::ZeroBlock => Perturbation::ZeroBlock { fraction: level },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub alternations: usize,
    pub fuzzifier: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let d = FusionSettings::default();
        FusionConfig {
            alternations: d.alternations,
            fuzzifier: d.fuzzifier,
        }
    }
}

fn default_split() -> SplitMode {
    SplitMode::Holdout
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub seed: u64,
    pub dataset: DatasetSource,
    pub methods: Vec<Method>,
    pub lambda: f64,
    #[serde(default)]
    pub tree: Option<TreeFile>,
    /// Multiplies the weight of every non-singleton tree group.
    #[serde(default)]
    pub weight_scale: Option<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub perturbation: Option<PerturbationSweep>,
    #[serde(default = "default_split")]
    pub split: SplitMode,
    /// Length of the CMC curve; defaults to the number of classes.
    #[serde(default)]
    pub rank_budget: Option<usize>,
    /// 1-based class treated as positive for detection rates.
    #[serde(default)]
    pub positive_class: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::param(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::param("method list is empty"));
        }
        if self.methods.iter().any(|m| m.needs_tree()) && self.tree.is_none() {
            return Err(Error::param("tree required for MTSRC methods"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::param("lambda must be positive"));
        }
        if let Some(scale) = self.weight_scale {
            if !(scale > 0.0) {
                return Err(Error::param("weight_scale must be positive"));
            }
        }
        if let Some(sweep) = &self.perturbation {
            if sweep.levels.is_empty() {
                return Err(Error::param("perturbation sweep has no levels"));
            }
            if sweep.modality == 0 {
                return Err(Error::param("perturbation modality is 1-based"));
            }
            for &level in &sweep.levels {
                sweep.kind.at(level).validate()?;
            }
        }
        if let SplitMode::KFold { folds } = self.split {
            if folds < 2 {
                return Err(Error::param("k-fold needs at least 2 folds"));
            }
        }
        self.solver.validate()?;
        self.fusion_settings().validate()
    }

    /// Resolves a relative manifest path against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSource::Manifest(path) = &mut self.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    fn fusion_settings(&self) -> FusionSettings {
        FusionSettings {
            alternations: self.fusion.alternations,
            fuzzifier: self.fusion.fuzzifier,
            solver: self.solver,
            ..Default::default()
        }
    }

    fn classify_settings(&self, num_modalities: usize) -> Result<ClassifySettings> {
        let tree = match &self.tree {
            Some(file) => {
                let tree = file.clone().into_tree(num_modalities)?;
                Some(match self.weight_scale {
                    Some(scale) => tree.scale_nonsingleton_weights(scale)?,
                    None => tree,
                })
            }
            None => None,
        };
        Ok(ClassifySettings {
            lambda: self.lambda,
            tree,
            fusion: self.fusion_settings(),
        })
    }
}

/// Metrics of one (method, perturbation level, fold) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub method: Method,
    pub level: Option<f64>,
    pub level_index: usize,
    pub fold: usize,
    #[serde(flatten)]
    pub metrics: MetricsReport,
    /// 1-based predicted class per test sample, in input order.
    pub predictions: Vec<usize>,
}

/// Fold-averaged metrics of one (method, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub method: Method,
    pub level: Option<f64>,
    pub level_index: usize,
    pub folds: usize,
    pub mean_ccr: f64,
    pub mean_cmc: Vec<f64>,
    pub mean_hdr: Option<f64>,
    pub mean_hfar: Option<f64>,
    pub mean_mr: Option<f64>,
    pub mean_mu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub points: Vec<PointReport>,
    pub summary: Vec<SummaryEntry>,
}

fn folds(dataset: &Dataset, split: SplitMode, seed: u64) -> Vec<(LabeledSet, LabeledSet)> {
    match split {
        SplitMode::Holdout => vec![(dataset.train.clone(), dataset.test.clone())],
        SplitMode::TwoWaySwap => vec![
            (dataset.train.clone(), dataset.test.clone()),
            (dataset.test.clone(), dataset.train.clone()),
        ],
        SplitMode::KFold { folds: k } => {
            let mut pool = dataset.train.clone();
            pool.extend(&dataset.test);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut assignment = vec![0usize; pool.len()];
            for c in 0..dataset.num_classes {
                let mut idx: Vec<usize> =
                    (0..pool.len()).filter(|&i| pool.labels[i] == c).collect();
                idx.shuffle(&mut rng);
                for (pos, i) in idx.into_iter().enumerate() {
                    assignment[i] = pos % k;
                }
            }
            (0..k)
                .map(|f| {
                    let train: Vec<usize> =
                        (0..pool.len()).filter(|&i| assignment[i] != f).collect();
                    let test: Vec<usize> =
                        (0..pool.len()).filter(|&i| assignment[i] == f).collect();
                    (pool.subset(&train), pool.subset(&test))
                })
                .collect()
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_option(values: Vec<Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    (!present.is_empty()).then(|| mean(present.into_iter()))
}

fn mean_vectors(vectors: &[&Vec<f64>]) -> Vec<f64> {
    let len = vectors.first().map_or(0, |v| v.len());
    (0..len)
        .map(|i| mean(vectors.iter().map(|v| v[i])))
        .collect()
}

/// Loads or generates the configured dataset.
pub fn load_source(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Synthetic(spec) => synth_generate(spec),
        DatasetSource::Manifest(path) => load_dataset(path),
    }
}

/// Runs every configured point. Results do not depend on thread scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dataset = load_source(&config.dataset)?;
    run_experiment_on(config, &dataset)
}

/// Like [`run_experiment`] with an already loaded dataset.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let num_modalities = dataset.num_modalities();
    let settings = config.classify_settings(num_modalities)?;
    let positive = config.positive_class.map(|p| p.wrapping_sub(1));
    if let Some(p) = positive {
        if p >= dataset.num_classes {
            return Err(Error::param("positive_class out of range"));
        }
    }
    let rank_budget = config.rank_budget.unwrap_or(dataset.num_classes);
    let levels: Vec<Option<f64>> = match &config.perturbation {
        Some(sweep) => sweep.levels.iter().copied().map(Some).collect(),
        None => vec![None],
    };

    let mut points = Vec::new();
    for (fold, (train, test)) in folds(dataset, config.split, config.seed)
        .into_iter()
        .enumerate()
    {
        let fold_data = Dataset {
            train,
            test,
            num_classes: dataset.num_classes,
        };
        let dictionary = fold_data.dictionary()?;
        let classifiers = config
            .methods
            .iter()
            .map(|&m| Classifier::new(&dictionary, m, &settings))
            .collect::<Result<Vec<_>>>()?;

        for (level_index, level) in levels.iter().enumerate() {
            let perturbed = match (&config.perturbation, level) {
                (Some(sweep), Some(level)) => {
                    let seed = config
                        .seed
                        .wrapping_mul(1_000_003)
                        .wrapping_add((fold * 1000 + level_index) as u64);
                    perturb(&fold_data, sweep.modality - 1, sweep.kind.at(*level), seed)?
                }
                _ => fold_data.clone(),
            };
            for classifier in &classifiers {
                let results: Vec<ClassificationResult> = perturbed
                    .test
                    .samples
                    .par_iter()
                    .map(|s| classifier.classify(s))
                    .collect::<Result<_>>()?;
                let rankings: Vec<Vec<usize>> = results.iter().map(|r| r.ranking()).collect();
                let mut metrics = compute_metrics(
                    &rankings,
                    &perturbed.test.labels,
                    dataset.num_classes,
                    rank_budget,
                    positive,
                )?;
                if classifier.method().is_weighted() {
                    let mus: Vec<&Vec<f64>> = results
                        .iter()
                        .filter_map(|r| r.weights.as_ref().map(|w| &w.mu))
                        .collect();
                    metrics.mean_mu = Some(mean_vectors(&mus));
                }
                points.push(PointReport {
                    method: classifier.method(),
                    level: *level,
                    level_index,
                    fold,
                    metrics,
                    predictions: results.iter().map(|r| r.predicted + 1).collect(),
                });
            }
        }
    }

    points.sort_by_key(|p| (p.method, p.level_index, p.fold));
    let summary = summarize(&points);
    Ok(ExperimentOutcome { points, summary })
}

fn summarize(points: &[PointReport]) -> Vec<SummaryEntry> {
    let mut keys: Vec<(Method, usize)> = points.iter().map(|p| (p.method, p.level_index)).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(method, level_index)| {
            let group: Vec<&PointReport> = points
                .iter()
                .filter(|p| p.method == method && p.level_index == level_index)
                .collect();
            let cmcs: Vec<&Vec<f64>> = group.iter().map(|p| &p.metrics.cmc).collect();
            let mus: Vec<&Vec<f64>> = group
                .iter()
                .filter_map(|p| p.metrics.mean_mu.as_ref())
                .collect();
            SummaryEntry {
                method,
                level: group[0].level,
                level_index,
                folds: group.len(),
                mean_ccr: mean(group.iter().map(|p| p.metrics.ccr)),
                mean_cmc: mean_vectors(&cmcs),
                mean_hdr: mean_option(group.iter().map(|p| p.metrics.hdr).collect()),
                mean_hfar: mean_option(group.iter().map(|p| p.metrics.hfar).collect()),
                mean_mr: mean_option(group.iter().map(|p| p.metrics.mr).collect()),
                mean_mu: (!mus.is_empty()).then(|| mean_vectors(&mus)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 3,
            modalities: 2,
            dims: vec![12, 12],
            subspace_dim: 2,
            train_per_class: 4,
            test_per_class: 3,
            latent_groups: vec![],
            noise: vec![0.01, 0.01],
            class_overlap: 0.0,
            prototypes: 0,
            prototype_jitter: 0.1,
            seed: 2,
        }
    }

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            schema: 1,
            seed: 5,
            dataset: DatasetSource::Synthetic(spec()),
            methods: vec![Method::Jsrc, Method::JsrcW],
            lambda: 0.01,
            tree: None,
            weight_scale: None,
            solver: SolverSettings::default(),
            fusion: FusionConfig {
                alternations: 3,
                fuzzifier: 2.0,
            },
            perturbation: Some(PerturbationSweep {
                modality: 2,
                kind: SweepKind::Gaussian,
                levels: vec![0.0, 0.5, 1.0, 2.0],
            }),
            split: SplitMode::Holdout,
            rank_budget: None,
            positive_class: None,
        }
    }

    #[test]
    fn sweep_produces_point_per_method_and_level() {
        let out = run_experiment(&config()).unwrap();
        assert_eq!(out.points.len(), 8);
        assert_eq!(out.summary.len(), 8);
        for p in &out.points {
            assert_eq!(p.metrics.cmc[0], p.metrics.ccr);
            assert!(p.metrics.cmc.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(p.predictions.len(), 9);
            assert_eq!(p.metrics.mean_mu.is_some(), p.method.is_weighted());
        }
    }

    #[test]
    fn two_way_swap_tests_every_sample_once() {
        let cfg = ExperimentConfig {
            split: SplitMode::TwoWaySwap,
            perturbation: None,
            methods: vec![Method::Jsrc],
            ..config()
        };
        let data = synth_generate(&spec()).unwrap();
        let f = folds(&data, cfg.split, cfg.seed);
        assert_eq!(f.len(), 2);
        let tested: usize = f.iter().map(|(_, t)| t.len()).sum();
        assert_eq!(tested, data.train.len() + data.test.len());
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.summary[0].folds, 2);
    }

    #[test]
    fn k_fold_partitions_pool() {
        let data = synth_generate(&spec()).unwrap();
        let f = folds(&data, SplitMode::KFold { folds: 3 }, 1);
        let mut seen: Vec<&crate::model::MultimodalSample> =
            f.iter().flat_map(|(_, t)| t.samples.iter()).collect();
        assert_eq!(seen.len(), 21);
        seen.dedup();
        assert_eq!(seen.len(), 21);
        for (train, test) in &f {
            assert_eq!(train.len() + test.len(), 21);
        }
    }

    #[test]
    fn empty_methods_rejected() {
        let cfg = ExperimentConfig {
            methods: vec![],
            ..config()
        };
        assert!(run_experiment(&cfg)
            .unwrap_err()
            .to_string()
            .contains("empty"));
        let cfg = ExperimentConfig {
            methods: vec![Method::Mtsrc],
            ..config()
        };
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn deterministic() {
        let a = run_experiment(&config()).unwrap();
        let b = run_experiment(&config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_json_round_trip() {
        let text = serde_json::to_string(&config()).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), config());
        assert!(ExperimentConfig::from_json("{\"schema\": 1,").is_err());
        let bad = text.replace("\"schema\":1", "\"schema\":2");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }
}
