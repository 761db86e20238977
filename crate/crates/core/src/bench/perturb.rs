//! Test-time corruption of a single modality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::synth::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Additive i.i.d. Gaussian noise with this standard deviation.
    Gaussian { sigma: f64 },
    /// A contiguous block covering this fraction of the coordinates is zeroed.
    ZeroBlock { fraction: f64 },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Perturbation::Gaussian { sigma } if !(sigma >= 0.0) || !sigma.is_finite() => {
                Err(Error::param(format!("invalid noise level {sigma}")))
            }
            Perturbation::ZeroBlock { fraction } if !(0.0..=1.0).contains(&fraction) => Err(
                Error::param(format!("invalid occlusion fraction {fraction}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Corrupts modality `modality` (0-based) of every test sample; training
/// data is left untouched.
pub fn perturb(
    dataset: &Dataset,
    modality: usize,
    kind: Perturbation,
    seed: u64,
) -> Result<Dataset> {
    kind.validate()?;
    if modality >= dataset.num_modalities() {
        return Err(Error::param(format!(
            "modality {} out of range (modalities: {})",
            modality + 1,
            dataset.num_modalities()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for sample in &mut out.test.samples {
        let x = sample.modality_mut(modality);
        match kind {
            Perturbation::Gaussian { sigma } => {
                if sigma > 0.0 {
                    x.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
                }
            }
            Perturbation::ZeroBlock { fraction } => {
                let n = x.len();
                let len = ((fraction * n as f64).round() as usize).min(n);
                if len > 0 {
                    let offset = rng.random_range(0..=n - len);
                    x.slice_mut(ndarray::s![offset..offset + len]).fill(0.0);
                }
            }
        }
    }
    Ok(out)
}
