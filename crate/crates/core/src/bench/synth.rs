//! Synthetic multimodal datasets with class subspaces and shared latent factors.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MultimodalDictionary, MultimodalSample};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub samples: Vec<MultimodalSample>,
    /// 0-based class of every sample.
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn extend(&mut self, other: &LabeledSet) {
        self.samples.extend(other.samples.iter().cloned());
        self.labels.extend(other.labels.iter().copied());
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub num_classes: usize,
}

impl Dataset {
    pub fn num_modalities(&self) -> usize {
        self.train
            .samples
            .first()
            .or(self.test.samples.first())
            .map_or(0, MultimodalSample::num_modalities)
    }

    pub fn dictionary(&self) -> Result<MultimodalDictionary> {
        MultimodalDictionary::from_labeled(
            &self.train.samples,
            &self.train.labels,
            self.num_classes,
        )
    }
}

fn default_overlap() -> f64 {
    0.0
}

fn default_jitter() -> f64 {
    0.1
}

/// Recipe for a synthetic dataset.
///
/// Each class owns a `subspace_dim`-dimensional subspace per modality.
/// Modalities listed in the same latent group share the latent coefficients
/// of a sample, so their observations are correlated; different groups draw
/// independent coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub modalities: usize,
    /// Feature dimension per modality.
    pub dims: Vec<usize>,
    pub subspace_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Partition of the modalities (1-based) into groups sharing latent factors.
    /// Empty means a single group with every modality.
    #[serde(default)]
    pub latent_groups: Vec<Vec<usize>>,
    /// Per-coordinate noise standard deviation per modality.
    pub noise: Vec<f64>,
    /// Blend in [0, 1) of a basis common to all classes into each class basis.
    #[serde(default = "default_overlap")]
    pub class_overlap: f64,
    /// When non-zero, latent coefficients cluster around this many
    /// prototypes per class and latent group.
    #[serde(default)]
    pub prototypes: usize,
    #[serde(default = "default_jitter")]
    pub prototype_jitter: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self.modalities;
        if self.classes == 0 || s == 0 {
            return Err(Error::param("need at least one class and one modality"));
        }
        if self.dims.len() != s || self.noise.len() != s {
            return Err(Error::param(format!(
                "dims and noise must list {s} entries (got {} and {})",
                self.dims.len(),
                self.noise.len()
            )));
        }
        if self.subspace_dim == 0 {
            return Err(Error::param("subspace dimension must be positive"));
        }
        if let Some(&n) = self.dims.iter().find(|&&n| n < self.subspace_dim) {
            return Err(Error::param(format!(
                "infeasible: subspace dimension {} exceeds modality dimension {n}",
                self.subspace_dim
            )));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::param("per-class counts must be at least 1"));
        }
        if self.noise.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::param("noise levels must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.class_overlap) {
            return Err(Error::param("class_overlap must lie in [0, 1)"));
        }
        if !(self.prototype_jitter >= 0.0) {
            return Err(Error::param("prototype_jitter must be non-negative"));
        }
        let groups = self.groups();
        let mut seen = vec![0usize; s];
        for m in groups.iter().flatten() {
            if *m >= s {
                return Err(Error::param(format!(
                    "latent group member {} out of range",
                    m + 1
                )));
            }
            seen[*m] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::param("latent groups must partition the modalities"));
        }
        Ok(())
    }

    /// Latent groups as 0-based index lists.
    fn groups(&self) -> Vec<Vec<usize>> {
        if self.latent_groups.is_empty() {
            vec![(0..self.modalities).collect()]
        } else {
            self.latent_groups
                .iter()
                .map(|g| g.iter().map(|m| m.wrapping_sub(1)).collect())
                .collect()
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Modified Gram-Schmidt on the columns.
fn orthonormalize(mut m: Array2<f64>) -> Array2<f64> {
    for j in 0..m.ncols() {
        for k in 0..j {
            let proj = m.column(k).dot(&m.column(j));
            let basis = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-proj, &basis);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        m.column_mut(j).mapv_inplace(|x| x / norm);
    }
    m
}

struct Generator {
    // bases[c][s]: n_s × d orthonormal
    bases: Vec<Vec<Array2<f64>>>,
    // prototypes[c][g]: latent prototypes of class c, group g
    prototypes: Vec<Vec<Vec<Array1<f64>>>>,
    groups: Vec<Vec<usize>>,
}

impl Generator {
    fn new(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let d = spec.subspace_dim;
        let common: Vec<Array2<f64>> = spec
            .dims
            .iter()
            .map(|&n| gaussian_matrix(rng, n, d))
            .collect();
        let bases = (0..spec.classes)
            .map(|_| {
                spec.dims
                    .iter()
                    .zip(&common)
                    .map(|(&n, shared)| {
                        let own = gaussian_matrix(rng, n, d);
                        let mixed = own * (1.0 - spec.class_overlap) + shared * spec.class_overlap;
                        orthonormalize(mixed)
                    })
                    .collect()
            })
            .collect();
        let groups = spec.groups();
        let scale = 1.0 / (d as f64).sqrt();
        let prototypes = (0..spec.classes)
            .map(|_| {
                groups
                    .iter()
                    .map(|_| {
                        (0..spec.prototypes)
                            .map(|_| gaussian_vector(rng, d, scale))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Generator {
            bases,
            prototypes,
            groups,
        }
    }

    fn sample(&self, spec: &SyntheticSpec, class: usize, rng: &mut ChaCha8Rng) -> MultimodalSample {
        let d = spec.subspace_dim;
        let scale = 1.0 / (d as f64).sqrt();
        let mut modalities = vec![Array1::zeros(0); spec.modalities];
        for (g, members) in self.groups.iter().enumerate() {
            let protos = &self.prototypes[class][g];
            let latent = if protos.is_empty() {
                gaussian_vector(rng, d, scale)
            } else {
                let k = rng.random_range(0..protos.len());
                &protos[k] + &gaussian_vector(rng, d, scale * spec.prototype_jitter)
            };
            for &s in members {
                let clean = self.bases[class][s].dot(&latent);
                let noise = gaussian_vector(rng, spec.dims[s], spec.noise[s]);
                modalities[s] = clean + noise;
            }
        }
        MultimodalSample::new(modalities)
    }
}

/// Draws train and test sets; identical specs give identical datasets.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let generator = Generator::new(spec, &mut rng);
    let draw = |per_class: usize, rng: &mut ChaCha8Rng| {
        let mut set = LabeledSet::default();
        for c in 0..spec.classes {
            for _ in 0..per_class {
                set.samples.push(generator.sample(spec, c, rng));
                set.labels.push(c);
            }
        }
        set
    };
    let train = draw(spec.train_per_class, &mut rng);
    let test = draw(spec.test_per_class, &mut rng);
    Ok(Dataset {
        train,
        test,
        num_classes: spec.classes,
    })
}
