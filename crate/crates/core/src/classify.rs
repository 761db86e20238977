//! Class decisions from class-restricted reconstruction errors.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{self, FusionSettings, QualityWeights};
use crate::model::{CoefficientMatrix, MultimodalDictionary, MultimodalSample, TreeGroupStructure};
use crate::solver::{self, SparsityPrior};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub predicted: usize,
    /// Aggregate (possibly weighted) residual per class.
    pub class_residuals: Vec<f64>,
    /// Unweighted residual per class (rows) and modality (columns).
    pub modality_residuals: Option<Array2<f64>>,
    pub weights: Option<QualityWeights>,
}

impl ClassificationResult {
    /// Classes ordered from lowest to highest aggregate residual; ties go to
    /// the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.class_residuals.len()).collect();
        order.sort_by(|&a, &b| {
            self.class_residuals[a]
                .total_cmp(&self.class_residuals[b])
                .then(a.cmp(&b))
        });
        order
    }
}

/// `‖y^s − X^s δ_c(α^s)‖²` for every class `c` and modality `s`.
pub fn class_residual_matrix(
    a: &CoefficientMatrix,
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
) -> Result<Array2<f64>> {
    dictionary.check_coefficients(a)?;
    dictionary.check_sample(sample)?;
    let (c, s) = (dictionary.num_classes(), dictionary.num_modalities());
    let mut out = Array2::zeros((c, s));
    for class in 0..c {
        let range = dictionary.class_range(class);
        for m in 0..s {
            let coef = a.column(m);
            let approx = dictionary
                .class_atoms(class, m)
                .dot(&coef.slice(s![range.clone()]));
            let r = &sample.modality(m) - &approx;
            out[[class, m]] = r.dot(&r);
        }
    }
    Ok(out)
}

/// Picks the class with the smallest aggregate residual, weighting modality
/// `s` by `(μ^s)^m` when quality weights are given.
pub fn classify_residual(
    a: &CoefficientMatrix,
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    weights: Option<&QualityWeights>,
) -> Result<ClassificationResult> {
    let per_modality = class_residual_matrix(a, dictionary, sample)?;
    let w = match weights {
        Some(q) if q.len() != dictionary.num_modalities() => {
            return Err(Error::dim("quality weights do not match modality count"))
        }
        Some(q) => q.data_weights(),
        None => vec![1.0; dictionary.num_modalities()],
    };
    let class_residuals: Vec<f64> = per_modality
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&w).map(|(r, w)| r * w).sum())
        .collect();
    let predicted = argmin(&class_residuals);
    Ok(ClassificationResult {
        predicted,
        class_residuals,
        modality_residuals: Some(per_modality),
        weights: weights.cloned(),
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Independent ℓ1 codes per modality, class residuals summed.
    #[serde(rename = "SRC_PER_MODALITY")]
    SrcPerModality,
    /// ℓ1 code of the concatenated feature vector.
    #[serde(rename = "HSRC")]
    Hsrc,
    #[serde(rename = "JSRC")]
    Jsrc,
    #[serde(rename = "MTSRC")]
    Mtsrc,
    #[serde(rename = "JSRC_W")]
    JsrcW,
    #[serde(rename = "MTSRC_W")]
    MtsrcW,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SrcPerModality,
        Method::Hsrc,
        Method::Jsrc,
        Method::Mtsrc,
        Method::JsrcW,
        Method::MtsrcW,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SrcPerModality => "SRC_PER_MODALITY",
            Method::Hsrc => "HSRC",
            Method::Jsrc => "JSRC",
            Method::Mtsrc => "MTSRC",
            Method::JsrcW => "JSRC_W",
            Method::MtsrcW => "MTSRC_W",
        }
    }

    pub fn needs_tree(self) -> bool {
        matches!(self, Method::Mtsrc | Method::MtsrcW)
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Method::JsrcW | Method::MtsrcW)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown method tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySettings {
    pub lambda: f64,
    pub tree: Option<TreeGroupStructure>,
    /// Alternation settings for the weighted methods; its inner solver
    /// settings drive every solve.
    pub fusion: FusionSettings,
}

impl ClassifySettings {
    pub fn new(lambda: f64) -> Self {
        ClassifySettings {
            lambda,
            tree: None,
            fusion: FusionSettings::default(),
        }
    }
}

/// A method bound to a training dictionary; reusable across test samples.
#[derive(Debug, Clone)]
pub struct Classifier {
    method: Method,
    dictionary: MultimodalDictionary,
    prior: SparsityPrior,
    fusion: FusionSettings,
}

impl Classifier {
    pub fn new(
        dictionary: &MultimodalDictionary,
        method: Method,
        settings: &ClassifySettings,
    ) -> Result<Self> {
        settings.fusion.validate()?;
        let lambda = settings.lambda;
        let tree = || {
            settings
                .tree
                .clone()
                .ok_or_else(|| Error::param(format!("tree required for {method}")))
        };
        let prior = match method {
            Method::SrcPerModality | Method::Hsrc => SparsityPrior::l1(lambda)?,
            Method::Jsrc | Method::JsrcW => SparsityPrior::joint(lambda)?,
            Method::Mtsrc | Method::MtsrcW => SparsityPrior::tree(tree()?, lambda)?,
        };
        let dictionary = match method {
            Method::Hsrc => dictionary.concatenated(),
            _ => dictionary.clone(),
        };
        // warm the spectral-norm cache once, before any sharing across threads
        solver::modality_spectral_norms(&dictionary);
        Ok(Classifier {
            method,
            dictionary,
            prior,
            fusion: settings.fusion.clone(),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn classify(&self, sample: &MultimodalSample) -> Result<ClassificationResult> {
        let sample = match self.method {
            Method::Hsrc => sample.concatenated(),
            _ => sample.clone(),
        };
        if self.method.is_weighted() {
            let fused =
                fusion::solve_weighted(&self.dictionary, &sample, &self.prior, &self.fusion)?;
            classify_residual(
                &fused.coefficients,
                &self.dictionary,
                &sample,
                Some(&fused.weights),
            )
        } else {
            let solved = solver::solve(
                &self.dictionary,
                &sample,
                &self.prior,
                &self.fusion.solver,
                None,
                None,
            )?;
            classify_residual(&solved.coefficients, &self.dictionary, &sample, None)
        }
    }
}

/// Solves for the sample's code with the given method and classifies it.
pub fn classify_pipeline(
    dictionary: &MultimodalDictionary,
    sample: &MultimodalSample,
    method: Method,
    settings: &ClassifySettings,
) -> Result<ClassificationResult> {
    Classifier::new(dictionary, method, settings)?.classify(sample)
}
