//! Synthetic longitudinal cohorts with planted, time-localized risk factors.
//!
//! Visit counts per window are Poisson, event occurrences are Poisson per
//! (window, event) cell and assigned to visits uniformly, and the label is
//! Bernoulli with logit `bias + sum beta_jp * c_jp` over the planted cells,
//! where `c_jp` is the count actually visible to featurization (visits in
//! window `j` containing event `p`). The Bayes-optimal scorer for this
//! family is exactly the linear-logistic model the solver estimates.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::cohort::{LabeledSequence, Visit};
use crate::error::{Error, Result};
use crate::featurize::WindowGrid;
use crate::scalar::{sigmoid, Float};

/// A nonzero coefficient of the label model at one (window, event) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect<F> {
    pub window: usize,
    pub event: usize,
    pub beta: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig<F> {
    pub n_patients: usize,
    pub t_windows: usize,
    pub p_events: usize,
    pub window_days: u32,
    pub planted: Vec<PlantedEffect<F>>,
    /// Mean event occurrences per visit for background cells.
    pub base_rate: F,
    /// Mean visits per window.
    pub visit_rate: F,
    /// Intercept of the label model.
    pub bias: F,
    pub seed: u64,
    /// Occurrence rate used for the planted cells instead of `base_rate`
    /// (lets planted events be prevalent enough to carry signal).
    pub planted_rate: Option<F>,
}

impl<F: Float> GeneratorConfig<F> {
    pub fn new(n_patients: usize, t_windows: usize, p_events: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_patients,
            t_windows,
            p_events,
            window_days: 60,
            planted: Vec::new(),
            base_rate: F::cast(0.05),
            visit_rate: F::cast(2.0),
            bias: F::zero(),
            seed,
            planted_rate: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0
            || self.t_windows == 0
            || self.p_events == 0
            || self.window_days == 0
        {
            return Err(Error::InvalidConfig(
                "n_patients, t_windows, p_events, window_days must be positive".into(),
            ));
        }
        if self.base_rate <= F::zero() || self.base_rate.is_nan() {
            return Err(Error::InvalidConfig("base_rate must be > 0".into()));
        }
        if self.visit_rate <= F::zero() || self.visit_rate.is_nan() {
            return Err(Error::InvalidConfig("visit_rate must be > 0".into()));
        }
        for effect in &self.planted {
            if effect.window >= self.t_windows || effect.event >= self.p_events {
                return Err(Error::InvalidConfig(format!(
                    "planted cell ({}, {}) outside [0,{})x[0,{})",
                    effect.window, effect.event, self.t_windows, self.p_events
                )));
            }
        }
        Ok(())
    }
}

/// The label model actually used, for recovery checks.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<F> {
    pub support: BTreeSet<(usize, usize)>,
    pub betas: BTreeMap<(usize, usize), F>,
    pub bias: F,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile<F> {
    bias: F,
    effects: Vec<PlantedEffect<F>>,
}

impl<F: Float + Serialize + serde::de::DeserializeOwned> GroundTruth<F> {
    /// JSON sidecar: `{"bias": ..., "effects": [{"window", "event", "beta"}]}`.
    pub fn to_json(&self) -> crate::error::Result<String> {
        let file = GroundTruthFile {
            bias: self.bias,
            effects: self
                .betas
                .iter()
                .map(|(&(window, event), &beta)| PlantedEffect {
                    window,
                    event,
                    beta,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> crate::error::Result<Self> {
        let file: GroundTruthFile<F> = serde_json::from_str(text)?;
        let betas: BTreeMap<(usize, usize), F> = file
            .effects
            .iter()
            .map(|e| ((e.window, e.event), e.beta))
            .collect();
        Ok(GroundTruth {
            support: betas.keys().copied().collect(),
            betas,
            bias: file.bias,
        })
    }
}

/// Generated cohort plus everything needed to verify it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort<F: Float> {
    pub sequences: Vec<LabeledSequence>,
    pub truth: GroundTruth<F>,
    pub grid: WindowGrid,
    /// The effective count matrix the labels were drawn from (window-major,
    /// identical to what featurization reproduces).
    pub counts: Array2<F>,
}

/// All observation windows start at a fixed date; only relative time matters.
const EPOCH: &str = "2015-01-01";

/// Draw a cohort. Deterministic given the seed: each patient uses an RNG
/// derived from `(seed, patient index)`, so the output is independent of
/// iteration order.
pub fn generate<F: Float>(config: &GeneratorConfig<F>) -> Result<SynthCohort<F>> {
    config.validate()?;
    let start = NaiveDate::parse_from_str(EPOCH, "%Y-%m-%d").expect("valid epoch");
    let grid = WindowGrid::new(config.t_windows, config.window_days)?;
    let span = grid.coverage_days();
    let end = start + chrono::Duration::days(span);

    let betas: BTreeMap<(usize, usize), F> = config
        .planted
        .iter()
        .map(|e| ((e.window, e.event), e.beta))
        .collect();
    let planted_rate = config.planted_rate.unwrap_or(config.base_rate);

    let (t, p) = (config.t_windows, config.p_events);
    let mut counts = Array2::<F>::zeros((config.n_patients, t * p));
    let mut sequences = Vec::with_capacity(config.n_patients);

    for i in 0..config.n_patients {
        let mut rng = ChaCha8Rng::seed_from_u64(
            config
                .seed
                .wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );

        // Visit slots per window, then event occurrences thrown onto them.
        let mut slots: Vec<Vec<(i64, BTreeSet<String>)>> = Vec::with_capacity(t);
        for j in 0..t {
            let k = sample_poisson(&mut rng, config.visit_rate.to_f64().unwrap());
            let lo = j as i64 * config.window_days as i64;
            let slot = (0..k)
                .map(|_| {
                    (
                        lo + rng.random_range(0..config.window_days as i64),
                        BTreeSet::new(),
                    )
                })
                .collect();
            slots.push(slot);
        }
        for (j, slot) in slots.iter_mut().enumerate() {
            let k = slot.len();
            if k == 0 {
                continue;
            }
            for e in 0..p {
                let rate = if betas.contains_key(&(j, e)) {
                    planted_rate
                } else {
                    config.base_rate
                };
                let occurrences = sample_poisson(&mut rng, rate.to_f64().unwrap() * k as f64);
                for _ in 0..occurrences {
                    let s = rng.random_range(0..k);
                    slot[s].1.insert(format!("E{e:04}"));
                }
            }
        }

        // Merge same-day slots, drop empty ones; this is the visit list
        // featurization sees, so effective counts are computed from it.
        let mut by_day: BTreeMap<i64, BTreeSet<String>> = BTreeMap::new();
        for (day, codes) in slots.into_iter().flatten() {
            if !codes.is_empty() {
                by_day.entry(day).or_default().extend(codes);
            }
        }
        for (&day, codes) in &by_day {
            let j = (day / config.window_days as i64) as usize;
            for code in codes {
                let e: usize = code[1..].parse().expect("synthetic code");
                counts[(i, j * p + e)] += F::one();
            }
        }

        let logit = betas.iter().fold(config.bias, |acc, (&(j, e), &beta)| {
            acc + beta * counts[(i, j * p + e)]
        });
        let label = u8::from(rng.random::<f64>() < sigmoid(logit).to_f64().unwrap());

        sequences.push(LabeledSequence {
            patient_id: format!("S{i:05}"),
            label,
            observation_start: start,
            observation_end: end,
            visits: by_day
                .into_iter()
                .map(|(day, codes)| Visit {
                    date: start + chrono::Duration::days(day),
                    codes,
                })
                .collect(),
        });
    }

    Ok(SynthCohort {
        sequences,
        truth: GroundTruth {
            support: betas.keys().copied().collect(),
            betas,
            bias: config.bias,
        },
        grid,
        counts,
    })
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("positive rate");
    dist.sample(rng) as usize
}

/// Score rows of a count matrix with the true label model (the Bayes
/// scorer), for oracle comparisons.
pub fn oracle_logits<F: Float>(
    truth: &GroundTruth<F>,
    counts: &Array2<F>,
    p_events: usize,
) -> Vec<F> {
    (0..counts.nrows())
        .map(|i| {
            truth
                .betas
                .iter()
                .fold(truth.bias, |acc, (&(j, e), &beta)| {
                    acc + beta * counts[(i, j * p_events + e)]
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{windowed_count_matrix, EventVocabulary};
    use crate::metrics::auc;

    fn full_vocab(p: usize) -> EventVocabulary {
        EventVocabulary::from_codes((0..p).map(|e| format!("E{e:04}")))
    }

    #[test]
    fn neutral_model_is_balanced() {
        let config = GeneratorConfig::<f64>::new(2000, 4, 6, 11);
        let cohort = generate(&config).unwrap();
        let rate = cohort.sequences.iter().filter(|s| s.label == 1).count() as f64 / 2000.0;
        assert!((0.45..=0.55).contains(&rate), "positive rate {rate}");
    }

    #[test]
    fn strong_negative_bias_suppresses_positives() {
        let mut config = GeneratorConfig::<f64>::new(2000, 4, 6, 12);
        config.bias = -10.0;
        let cohort = generate(&config).unwrap();
        let rate = cohort.sequences.iter().filter(|s| s.label == 1).count() as f64 / 2000.0;
        assert!(rate < 0.01, "positive rate {rate}");
    }

    #[test]
    fn planted_signal_is_recoverable_by_the_oracle() {
        let mut config = GeneratorConfig::<f64>::new(2000, 4, 6, 13);
        config.planted = vec![PlantedEffect {
            window: 2,
            event: 1,
            beta: 3.0,
        }];
        config.planted_rate = Some(0.8);
        let cohort = generate(&config).unwrap();
        let logits = oracle_logits(&cohort.truth, &cohort.counts, 6);
        let labels: Vec<u8> = cohort.sequences.iter().map(|s| s.label).collect();
        let score = auc(&labels, &logits).unwrap();
        assert!(score > 0.8, "oracle AUC {score}");
    }

    #[test]
    fn featurization_reproduces_the_internal_counts() {
        let mut config = GeneratorConfig::<f64>::new(200, 5, 8, 14);
        config.planted = vec![PlantedEffect {
            window: 4,
            event: 0,
            beta: 1.5,
        }];
        config.planted_rate = Some(0.5);
        config.base_rate = 0.1;
        let cohort = generate(&config).unwrap();
        let vocab = full_vocab(8);
        let (matrix, dropped) =
            windowed_count_matrix::<f64>(&cohort.sequences, &cohort.grid, &vocab).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(matrix.values, cohort.counts);
    }

    #[test]
    fn labels_are_calibrated_against_the_true_sigmoid() {
        let mut config = GeneratorConfig::<f64>::new(5000, 4, 6, 15);
        config.planted = vec![
            PlantedEffect {
                window: 0,
                event: 0,
                beta: 1.5,
            },
            PlantedEffect {
                window: 3,
                event: 1,
                beta: -1.5,
            },
        ];
        config.planted_rate = Some(0.6);
        let cohort = generate(&config).unwrap();
        let logits = oracle_logits(&cohort.truth, &cohort.counts, 6);

        let mut bin_label = [0.0f64; 10];
        let mut bin_prob = [0.0f64; 10];
        let mut bin_n = [0usize; 10];
        for (i, &logit) in logits.iter().enumerate() {
            let prob = sigmoid(logit);
            let bin = ((prob * 10.0) as usize).min(9);
            bin_label[bin] += cohort.sequences[i].label as f64;
            bin_prob[bin] += prob;
            bin_n[bin] += 1;
        }
        for bin in 0..10 {
            if bin_n[bin] >= 100 {
                let observed = bin_label[bin] / bin_n[bin] as f64;
                let expected = bin_prob[bin] / bin_n[bin] as f64;
                assert!(
                    (observed - expected).abs() <= 0.05,
                    "bin {bin}: observed {observed:.3} vs expected {expected:.3} (n={})",
                    bin_n[bin]
                );
            }
        }
    }

    #[test]
    fn ground_truth_sidecar_roundtrip() {
        let mut config = GeneratorConfig::<f64>::new(10, 3, 4, 1);
        config.planted = vec![PlantedEffect {
            window: 1,
            event: 2,
            beta: -2.0,
        }];
        config.bias = 0.5;
        let cohort = generate(&config).unwrap();
        let json = cohort.truth.to_json().unwrap();
        assert!(json.contains("\"effects\""), "{json}");
        let back = GroundTruth::<f64>::from_json(&json).unwrap();
        assert_eq!(back, cohort.truth);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut config = GeneratorConfig::<f64>::new(50, 3, 4, 16);
        config.planted = vec![PlantedEffect {
            window: 1,
            event: 2,
            beta: 2.0,
        }];
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
        config.seed = 17;
        let c = generate(&config).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        let mut config = GeneratorConfig::<f64>::new(10, 3, 4, 0);
        config.planted = vec![PlantedEffect {
            window: 3,
            event: 0,
            beta: 1.0,
        }];
        assert!(generate(&config).is_err());
        config.planted = vec![];
        config.base_rate = 0.0;
        assert!(generate(&config).is_err());
    }

    #[test]
    fn visits_lie_in_their_windows_and_are_ordered() {
        let config = GeneratorConfig::<f64>::new(100, 4, 5, 18);
        let cohort = generate(&config).unwrap();
        for seq in &cohort.sequences {
            let mut last = None;
            for v in &seq.visits {
                assert!(v.date >= seq.observation_start && v.date < seq.observation_end);
                assert!(!v.codes.is_empty());
                if let Some(prev) = last {
                    assert!(v.date > prev);
                }
                last = Some(v.date);
            }
        }
    }
}
