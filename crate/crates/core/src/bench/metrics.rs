//! Recognition metrics: correct classification rate, confusion matrix,
//! cumulative match characteristic and binary detection rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub ccr: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `cmc[r]`: fraction of samples whose true class is among the `r + 1`
    /// best-ranked classes.
    pub cmc: Vec<f64>,
    /// Detection rate on the positive class.
    pub hdr: Option<f64>,
    /// False alarm rate: negatives predicted positive.
    pub hfar: Option<f64>,
    /// Misclassification rate in percent.
    pub mr: Option<f64>,
    /// Mean quality weight per modality, for weighted methods.
    pub mean_mu: Option<Vec<f64>>,
}

/// `rankings[i]` lists classes from best to worst for sample `i`.
pub fn compute_metrics(
    rankings: &[Vec<usize>],
    truth: &[usize],
    num_classes: usize,
    rank_budget: usize,
    positive: Option<usize>,
) -> Result<MetricsReport> {
    if rankings.is_empty() {
        return Err(Error::param("no predictions to score"));
    }
    if rankings.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions but {} labels",
            rankings.len(),
            truth.len()
        )));
    }
    let budget = rank_budget.clamp(1, num_classes.max(1));
    let n = truth.len();
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    let mut hits = vec![0usize; budget];
    for (ranking, &t) in rankings.iter().zip(truth) {
        let predicted = *ranking
            .first()
            .ok_or_else(|| Error::param("empty ranking"))?;
        if t >= num_classes || predicted >= num_classes {
            return Err(Error::ClassOutOfRange {
                class: t.max(predicted),
                classes: num_classes,
            });
        }
        confusion[t][predicted] += 1;
        if let Some(rank) = ranking.iter().position(|&c| c == t) {
            for h in hits.iter_mut().skip(rank) {
                *h += 1;
            }
        }
    }
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let ccr = correct as f64 / n as f64;
    let cmc = hits.iter().map(|&h| h as f64 / n as f64).collect();

    let (hdr, hfar, mr) = match positive {
        Some(p) => {
            let (mut tp, mut fn_, mut fp, mut tn) = (0usize, 0usize, 0usize, 0usize);
            for (ranking, &t) in rankings.iter().zip(truth) {
                match (t == p, ranking[0] == p) {
                    (true, true) => tp += 1,
                    (true, false) => fn_ += 1,
                    (false, true) => fp += 1,
                    (false, false) => tn += 1,
                }
            }
            let rate = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
            (rate(tp, fn_), rate(fp, tn), Some(100.0 * (1.0 - ccr)))
        }
        None => (None, None, None),
    };

    Ok(MetricsReport {
        count: n,
        ccr,
        confusion,
        cmc,
        hdr,
        hfar,
        mr,
        mean_mu: None,
    })
}
