//! Classification metrics: sensitivity, specificity, rank-based AUC, F2,
//! and aggregation of repeated experiment runs into mean/std reports.

use std::io::Write;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Float;

/// Confusion counts at a fixed threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Threshold scores at `threshold` (score >= threshold predicts positive)
/// and tally the confusion counts.
pub fn confusion<F: Float>(labels: &[u8], scores: &[F], threshold: F) -> Result<ConfusionCounts> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels for confusion counts"));
    }
    let mut c = ConfusionCounts::default();
    for (&l, &s) in labels.iter().zip(scores.iter()) {
        let predicted = s >= threshold;
        match (l, predicted) {
            (1, true) => c.tp += 1,
            (1, false) => c.fn_ += 1,
            (0, true) => c.fp += 1,
            (0, false) => c.tn += 1,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "label must be 0 or 1, got {l}"
                )))
            }
        }
    }
    Ok(c)
}

/// `(tp / (tp + fn), tn / (tn + fp))`. Errors when either class is absent.
pub fn sensitivity_specificity<F: Float>(c: &ConfusionCounts) -> Result<(F, F)> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("sensitivity needs positive samples"));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::UndefinedMetric("specificity needs negative samples"));
    }
    let sens = F::from_count(c.tp) / F::from_count(c.tp + c.fn_);
    let spec = F::from_count(c.tn) / F::from_count(c.tn + c.fp);
    Ok((sens, spec))
}

/// Area under the ROC curve in its Mann-Whitney rank form, with average
/// ranks for tied scores:
/// `(sum of positive ranks - n_pos (n_pos + 1) / 2) / (n_pos * n_neg)`.
pub fn auc<F: Float>(labels: &[u8], scores: &[F]) -> Result<F> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.iter().filter(|&&l| l == 0).count();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes"));
    }

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks over tie groups, accumulate ranks of positives.
    let mut rank_sum = F::zero();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average (i + j + 2) / 2.
        let avg_rank = F::from_count(i + j + 2) / F::cast(2.0);
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = F::from_count(n_pos);
    let nn = F::from_count(n_neg);
    Ok((rank_sum - np * (np + F::one()) / F::cast(2.0)) / (np * nn))
}

/// F2 score: `5 * ppv * sens / (4 * ppv + sens)`, 0 when there are no true
/// positives.
pub fn f2<F: Float>(c: &ConfusionCounts) -> F {
    if c.tp == 0 {
        return F::zero();
    }
    let sens = F::from_count(c.tp) / F::from_count(c.tp + c.fn_);
    let ppv = F::from_count(c.tp) / F::from_count(c.tp + c.fp);
    F::cast(5.0) * ppv * sens / (F::cast(4.0) * ppv + sens)
}

/// Metrics of a single experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics<F> {
    pub sensitivity: F,
    pub specificity: F,
    pub auc: F,
    pub f2: F,
}

/// Sample mean and standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd<F> {
    pub mean: F,
    pub std: F,
}

fn mean_std<F: Float>(values: &[F]) -> MeanStd<F> {
    let n = F::from_count(values.len());
    let mean = values.iter().copied().sum::<F>() / n;
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>();
    let std = (ss / (n - F::one())).sqrt();
    MeanStd { mean, std }
}

/// Per-metric mean/std blocks of a repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock<F> {
    pub sensitivity: MeanStd<F>,
    pub specificity: MeanStd<F>,
    pub auc: MeanStd<F>,
    pub f2: MeanStd<F>,
}

/// Aggregated report over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: DeserializeOwned"))]
pub struct EvalReport<F> {
    pub repeats: usize,
    pub threshold: F,
    pub metrics: MetricsBlock<F>,
}

/// Run `experiment` with seeds `base_seed .. base_seed + repeats` and
/// aggregate the per-run metrics. Runs execute in parallel; results are
/// collected in seed order, and any failing run aborts with its seed.
pub fn repeated_eval<F, E>(
    experiment: E,
    repeats: usize,
    base_seed: u64,
    threshold: F,
) -> Result<EvalReport<F>>
where
    F: Float,
    E: Fn(u64) -> Result<RunMetrics<F>> + Sync,
{
    use rayon::prelude::*;
    if repeats < 2 {
        return Err(Error::InvalidConfig("repeats must be >= 2".into()));
    }
    let runs: Vec<RunMetrics<F>> = (0..repeats)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed + k as u64;
            experiment(seed)
                .map_err(|e| Error::Numerical(format!("run with seed {seed} failed: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        repeats,
        threshold,
        metrics: MetricsBlock {
            sensitivity: mean_std(&runs.iter().map(|r| r.sensitivity).collect::<Vec<_>>()),
            specificity: mean_std(&runs.iter().map(|r| r.specificity).collect::<Vec<_>>()),
            auc: mean_std(&runs.iter().map(|r| r.auc).collect::<Vec<_>>()),
            f2: mean_std(&runs.iter().map(|r| r.f2).collect::<Vec<_>>()),
        },
    })
}

impl<F: Float + Serialize + DeserializeOwned> EvalReport<F> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl<F: Float> EvalReport<F> {
    /// Aligned plain-text table of the report.
    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "repeats: {}  threshold: {}",
            self.repeats, self.threshold
        )?;
        writeln!(w, "{:<12} {:>10} {:>10}", "metric", "mean", "std")?;
        let rows = [
            ("sensitivity", self.metrics.sensitivity),
            ("specificity", self.metrics.specificity),
            ("auc", self.metrics.auc),
            ("f2", self.metrics.f2),
        ];
        for (name, ms) in rows {
            writeln!(
                w,
                "{:<12} {:>10.4} {:>10.4}",
                name,
                ms.mean.to_f64().unwrap_or(f64::NAN),
                ms.std.to_f64().unwrap_or(f64::NAN)
            )?;
        }
        Ok(())
    }
}
