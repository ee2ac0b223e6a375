//! Seeded stratified splits for repeated evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row indices of a train/validation/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle each label stratum with the seeded RNG and cut it by the given
/// fractions (rounding remainders go to the training portion). Outputs are
/// sorted so downstream work is order-independent.
pub fn stratified_split(labels: &[u8], fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fe) = fractions;
    if ft <= 0.0 || fv < 0.0 || fe <= 0.0 || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be positive (validation may be 0) and sum to 1, got {ft}/{fv}/{fe}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: vec![],
        valid: vec![],
        test: vec![],
    };
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_valid = (fv * n as f64).floor() as usize;
        let n_test = (fe * n as f64).floor() as usize;
        let n_train = n - n_valid - n_test;
        split.train.extend(&idx[..n_train]);
        split.valid.extend(&idx[n_train..n_train + n_valid]);
        split.test.extend(&idx[n_train + n_valid..]);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidConfig(
            "split produced an empty train or test set".into(),
        ));
    }
    Ok(split)
}

/// Bootstrap resample preserving class counts: within each label stratum,
/// draw as many indices (with replacement) as the stratum holds.
pub fn stratified_resample(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    use rand::Rng;
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels for resampling"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len());
    for class in [0u8, 1u8] {
        let idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        for _ in 0..idx.len() {
            out.push(idx[rng.random_range(0..idx.len().max(1))]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_preserves_class_counts() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 5 == 0) as u8).collect();
        let sample = stratified_resample(&labels, 3).unwrap();
        assert_eq!(sample.len(), 50);
        let positives = sample.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(positives, 10);
        assert_eq!(stratified_resample(&labels, 3).unwrap(), sample);
    }

    #[test]
    fn split_partitions_and_stratifies() {
        let labels: Vec<u8> = (0..100).map(|i| (i < 30) as u8).collect();
        let split = stratified_split(&labels, (0.6, 0.2, 0.2), 42).unwrap();
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        // Positives stratified: 30 positives -> 6 in valid, 6 in test.
        let pos_in = |v: &[usize]| v.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(pos_in(&split.valid), 6);
        assert_eq!(pos_in(&split.test), 6);
        assert_eq!(pos_in(&split.train), 18);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        let a = stratified_split(&labels, (0.6, 0.2, 0.2), 7).unwrap();
        let b = stratified_split(&labels, (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&labels, (0.6, 0.2, 0.2), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_validation_fraction_is_allowed() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let split = stratified_split(&labels, (0.8, 0.0, 0.2), 1).unwrap();
        assert!(split.valid.is_empty());
        assert_eq!(split.train.len() + split.test.len(), 20);
    }

    #[test]
    fn bad_fractions_rejected() {
        let labels = vec![0, 1, 0, 1];
        assert!(stratified_split(&labels, (0.5, 0.2, 0.2), 0).is_err());
        assert!(stratified_split(&labels, (0.0, 0.5, 0.5), 0).is_err());
    }
}
