//! Windowed count featurization and the AFV / ATV / BPS baseline vectors.
//!
//! The primary representation splits each observation window into `T` even
//! time windows and counts, per window, how many visits contain each
//! vocabulary event. Rows are laid out window-major: column `j*P + p` holds
//! the count of event `p` in window `j`.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::cohort::LabeledSequence;
use crate::error::{Error, Result};
use crate::scalar::Float;
use crate::seqmine::{contains, SequentialPattern};

/// Frozen, lexicographically ordered event universe built from training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventVocabulary {
    codes: Vec<String>,
    index: HashMap<String, usize>,
}

impl EventVocabulary {
    /// Build a vocabulary from an explicit code list (deduplicated, sorted).
    pub fn from_codes<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        codes.sort();
        codes.dedup();
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        EventVocabulary { codes, index }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }
}

/// Collect the distinct codes observed in the training sequences.
pub fn build_vocabulary(train: &[LabeledSequence]) -> Result<EventVocabulary> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training sequences for vocabulary"));
    }
    let codes = train
        .iter()
        .flat_map(|s| s.visits.iter())
        .flat_map(|v| v.codes.iter().cloned());
    Ok(EventVocabulary::from_codes(codes))
}

/// Even division of the observation window into `t_windows` windows of
/// `window_days` days each, anchored at the observation start. The last
/// window is clipped at the observation end when `T * window_days`
/// over-covers the span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub t_windows: usize,
    pub window_days: u32,
}

impl WindowGrid {
    pub fn new(t_windows: usize, window_days: u32) -> Result<Self> {
        if t_windows == 0 || window_days == 0 {
            return Err(Error::InvalidConfig(
                "window grid needs t_windows > 0 and window_days > 0".into(),
            ));
        }
        Ok(WindowGrid {
            t_windows,
            window_days,
        })
    }

    /// Total days the grid can cover.
    pub fn coverage_days(&self) -> i64 {
        self.t_windows as i64 * self.window_days as i64
    }

    fn check_covers(&self, seq: &LabeledSequence) -> Result<()> {
        if self.coverage_days() < seq.span_days() {
            return Err(Error::InvalidConfig(format!(
                "grid covers {} days but observation window of {} spans {} days",
                self.coverage_days(),
                seq.patient_id,
                seq.span_days()
            )));
        }
        Ok(())
    }

    /// Window index for a day offset from the observation start.
    fn window_of(&self, offset_days: i64) -> usize {
        (offset_days / self.window_days as i64) as usize
    }
}

/// Dense N x (T*P) window-major count matrix over a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedCountMatrix<F: Float> {
    pub values: Array2<F>,
    pub row_ids: Vec<String>,
    pub grid: WindowGrid,
    pub vocab: EventVocabulary,
}

impl<F: Float> WindowedCountMatrix<F> {
    /// Wrap a raw design matrix whose columns split into `t_windows` equal
    /// groups, synthesizing `E{p:04}` event names and a nominal grid. Used
    /// for generated data and tests.
    pub fn from_values(values: Array2<F>, t_windows: usize, window_days: u32) -> Result<Self> {
        if t_windows == 0 || !values.ncols().is_multiple_of(t_windows) {
            return Err(Error::InvalidConfig(format!(
                "{} columns do not split into {} equal groups",
                values.ncols(),
                t_windows
            )));
        }
        let p = values.ncols() / t_windows;
        let vocab = EventVocabulary::from_codes((0..p).map(|i| format!("E{i:04}")));
        let row_ids = (0..values.nrows()).map(|i| format!("r{i}")).collect();
        Ok(WindowedCountMatrix {
            values,
            row_ids,
            grid: WindowGrid {
                t_windows,
                window_days,
            },
            vocab,
        })
    }

    /// New matrix holding the given rows (indices may repeat, as in a
    /// bootstrap draw).
    pub fn select_rows(&self, rows: &[usize]) -> WindowedCountMatrix<F> {
        let mut values = Array2::<F>::zeros((rows.len(), self.n_features()));
        let mut row_ids = Vec::with_capacity(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            values.row_mut(k).assign(&self.values.row(i));
            row_ids.push(self.row_ids[i].clone());
        }
        WindowedCountMatrix {
            values,
            row_ids,
            grid: self.grid,
            vocab: self.vocab.clone(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Group count (`T`) seen by the group-lasso penalty.
    pub fn n_groups(&self) -> usize {
        self.grid.t_windows
    }

    /// Events per group (`P`).
    pub fn group_size(&self) -> usize {
        self.vocab.len()
    }
}

/// A named dense feature row (carrier for the AFV/ATV/BPS baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<F: Float> {
    pub values: Vec<F>,
    pub names: Vec<String>,
}

/// One window-major count row for a sequence. Codes outside the vocabulary
/// are ignored; the second return value counts those dropped occurrences.
pub fn preliminary_representation<F: Float>(
    seq: &LabeledSequence,
    grid: &WindowGrid,
    vocab: &EventVocabulary,
) -> Result<(Array1<F>, usize)> {
    grid.check_covers(seq)?;
    let p = vocab.len();
    let mut row = Array1::<F>::zeros(grid.t_windows * p);
    let mut dropped = 0usize;
    for visit in &seq.visits {
        let offset = (visit.date - seq.observation_start).num_days();
        if offset < 0 || visit.date >= seq.observation_end {
            return Err(Error::Ingest {
                line: None,
                msg: format!(
                    "visit on {} outside observation window of {}",
                    visit.date, seq.patient_id
                ),
            });
        }
        let j = grid.window_of(offset);
        for code in &visit.codes {
            match vocab.position(code) {
                Some(idx) => row[j * p + idx] += F::one(),
                None => dropped += 1,
            }
        }
    }
    Ok((row, dropped))
}

/// Stack preliminary rows for a whole cohort. Returns the matrix and the
/// total count of unknown-code occurrences dropped.
pub fn windowed_count_matrix<F: Float>(
    seqs: &[LabeledSequence],
    grid: &WindowGrid,
    vocab: &EventVocabulary,
) -> Result<(WindowedCountMatrix<F>, usize)> {
    let p = vocab.len();
    let mut values = Array2::<F>::zeros((seqs.len(), grid.t_windows * p));
    let mut dropped = 0usize;
    for (i, seq) in seqs.iter().enumerate() {
        let (row, d) = preliminary_representation::<F>(seq, grid, vocab)?;
        dropped += d;
        values.row_mut(i).assign(&row);
    }
    Ok((
        WindowedCountMatrix {
            values,
            row_ids: seqs.iter().map(|s| s.patient_id.clone()).collect(),
            grid: *grid,
            vocab: vocab.clone(),
        },
        dropped,
    ))
}

/// Binary labels of a cohort, aligned with the matrix rows.
pub fn labels(seqs: &[LabeledSequence]) -> Vec<u8> {
    seqs.iter().map(|s| s.label).collect()
}

/// Aggregated frequency vector: per event, the number of visits in the
/// observation window containing it.
pub fn afv<F: Float>(seq: &LabeledSequence, vocab: &EventVocabulary) -> FeatureVector<F> {
    let mut values = vec![F::zero(); vocab.len()];
    for visit in &seq.visits {
        for code in &visit.codes {
            if let Some(idx) = vocab.position(code) {
                values[idx] += F::one();
            }
        }
    }
    FeatureVector {
        values,
        names: vocab.codes().to_vec(),
    }
}

/// Aggregated transition vector: counts of ordered event pairs over
/// consecutive visit pairs. Dimension is `P^2`, entry `(a, b)` at `a*P + b`.
pub fn atv<F: Float>(seq: &LabeledSequence, vocab: &EventVocabulary) -> FeatureVector<F> {
    let p = vocab.len();
    let mut values = vec![F::zero(); p * p];
    for pair in seq.visits.windows(2) {
        for a in &pair[0].codes {
            let Some(ia) = vocab.position(a) else {
                continue;
            };
            for b in &pair[1].codes {
                if let Some(ib) = vocab.position(b) {
                    values[ia * p + ib] += F::one();
                }
            }
        }
    }
    let names = vocab
        .codes()
        .iter()
        .flat_map(|a| vocab.codes().iter().map(move |b| format!("{a}>{b}")))
        .collect();
    FeatureVector { values, names }
}

/// Bag-of-patterns vector: binary presence indicators of the mined frequent
/// patterns under subsequence-of-itemsets semantics.
pub fn bps_features<F: Float>(
    seq: &LabeledSequence,
    patterns: &[SequentialPattern],
) -> FeatureVector<F> {
    let itemsets: Vec<_> = seq.visits.iter().map(|v| v.codes.clone()).collect();
    let values = patterns
        .iter()
        .map(|pat| {
            if contains(&itemsets, pat) {
                F::one()
            } else {
                F::zero()
            }
        })
        .collect();
    let names = (0..patterns.len()).map(|k| format!("pat{k}")).collect();
    FeatureVector { values, names }
}

/// Stack per-sequence feature vectors into a single-group count matrix the
/// solver can consume (grid with `T = 1` spanning the whole observation
/// window; the "vocabulary" is the feature-name list).
pub fn stack_feature_rows<F: Float>(
    seqs: &[LabeledSequence],
    rows: Vec<FeatureVector<F>>,
    window_days: u32,
) -> Result<WindowedCountMatrix<F>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("feature rows"));
    }
    let names = rows[0].names.clone();
    let dim = names.len();
    let mut values = Array2::<F>::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        if row.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.values.len(),
            });
        }
        for (j, v) in row.values.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    // Feature names arrive sorted except for BPS's pat{k} order, which must
    // be preserved; bypass the sorting constructor.
    let index = names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let vocab = EventVocabulary {
        codes: names,
        index,
    };
    Ok(WindowedCountMatrix {
        values,
        row_ids: seqs.iter().map(|s| s.patient_id.clone()).collect(),
        grid: WindowGrid {
            t_windows: 1,
            window_days,
        },
        vocab,
    })
}

/// Write a count matrix as delimited text with a `patient_id,label,...`
/// header. Window-major column names are `t{j}|{code}`; single-group
/// matrices use the bare feature names.
pub fn write_matrix_csv<F: Float, W: Write>(
    mut w: W,
    matrix: &WindowedCountMatrix<F>,
    labels: &[u8],
) -> Result<()> {
    if labels.len() != matrix.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_rows(),
            got: labels.len(),
        });
    }
    let mut header = vec!["patient_id".to_string(), "label".to_string()];
    if matrix.grid.t_windows == 1 {
        header.extend(matrix.vocab.codes().iter().cloned());
    } else {
        for j in 0..matrix.grid.t_windows {
            for code in matrix.vocab.codes() {
                header.push(format!("t{j}|{code}"));
            }
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, id) in matrix.row_ids.iter().enumerate() {
        write!(w, "{id},{}", labels[i])?;
        for v in matrix.values.row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
