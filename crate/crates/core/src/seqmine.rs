//! Frequent sequential-pattern mining over sequences of itemsets.
//!
//! A pattern is an ordered list of non-empty itemsets; a sequence contains
//! it when the itemsets can be mapped, in order, onto distinct visits with
//! each itemset a subset of its visit (gaps allowed). Support is the number
//! of sequences containing the pattern. Mining is done by depth-first
//! prefix growth: patterns are extended either by a new itemset
//! (s-extension) or by adding a lexicographically larger item to the last
//! itemset (i-extension), pruning on support.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

/// A frequent pattern together with its training support count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequentialPattern {
    pub elements: Vec<BTreeSet<String>>,
    pub support: usize,
}

impl SequentialPattern {
    /// Total number of items across all itemsets.
    pub fn len(&self) -> usize {
        self.elements.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

impl std::fmt::Display for SequentialPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = self
            .elements
            .iter()
            .map(|e| e.iter().cloned().collect::<Vec<_>>().join("&"))
            .collect::<Vec<_>>()
            .join("->");
        write!(f, "{text}")
    }
}

/// Mining knobs: relative support threshold and the cap on total items per
/// pattern.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinerConfig {
    pub min_support: f64,
    pub max_length: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            min_support: 0.2,
            max_length: 3,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "min_support must lie in (0, 1], got {}",
                self.min_support
            )));
        }
        if self.max_length == 0 {
            return Err(Error::InvalidConfig("max_length must be >= 1".into()));
        }
        Ok(())
    }
}

/// True iff `pattern` occurs in `sequence`: an order-preserving injective
/// mapping of pattern itemsets onto visits exists with each itemset a
/// subset of its visit. Greedy left-most matching decides this exactly.
pub fn contains(sequence: &[BTreeSet<String>], pattern: &SequentialPattern) -> bool {
    let mut cursor = 0usize;
    for element in &pattern.elements {
        loop {
            if cursor >= sequence.len() {
                return false;
            }
            if element.is_subset(&sequence[cursor]) {
                cursor += 1;
                break;
            }
            cursor += 1;
        }
    }
    true
}

/// Mine all patterns with `len() <= max_length` supported by at least
/// `ceil(min_support * N)` sequences. Output is deterministic, sorted by
/// (total items, lexicographic element order).
pub fn mine_frequent(
    sequences: &[Vec<BTreeSet<String>>],
    config: &MinerConfig,
) -> Result<Vec<SequentialPattern>> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::EmptyInput("sequences for pattern mining"));
    }
    let min_count = (config.min_support * sequences.len() as f64)
        .ceil()
        .max(1.0) as usize;

    // Intern codes; item ids follow lexicographic code order.
    let alphabet: Vec<String> = sequences
        .iter()
        .flat_map(|s| s.iter())
        .flat_map(|e| e.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id_of = |code: &str| alphabet.binary_search_by(|c| c.as_str().cmp(code)).unwrap() as u32;
    let interned: Vec<Vec<Vec<u32>>> = sequences
        .iter()
        .map(|s| {
            s.iter()
                .map(|e| e.iter().map(|c| id_of(c)).collect())
                .collect()
        })
        .collect();

    // Frequent single items seed both extension kinds.
    let mut frequent_items = Vec::new();
    for item in 0..alphabet.len() as u32 {
        let support = interned
            .iter()
            .filter(|s| s.iter().any(|e| e.binary_search(&item).is_ok()))
            .count();
        if support >= min_count {
            frequent_items.push(item);
        }
    }

    let mut found: Vec<(Vec<Vec<u32>>, usize)> = Vec::new();
    let all_ids: Vec<usize> = (0..interned.len()).collect();
    for &item in &frequent_items {
        let pattern = vec![vec![item]];
        let supporters: Vec<usize> = all_ids
            .iter()
            .copied()
            .filter(|&i| contains_interned(&interned[i], &pattern))
            .collect();
        grow(
            &pattern,
            &supporters,
            &interned,
            &frequent_items,
            min_count,
            config.max_length,
            &mut found,
        );
    }

    let mut out: Vec<SequentialPattern> = found
        .into_iter()
        .map(|(elements, support)| SequentialPattern {
            elements: elements
                .into_iter()
                .map(|e| {
                    e.into_iter()
                        .map(|i| alphabet[i as usize].clone())
                        .collect()
                })
                .collect(),
            support,
        })
        .collect();
    out.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.elements.cmp(&b.elements))
    });
    Ok(out)
}

fn grow(
    pattern: &[Vec<u32>],
    supporters: &[usize],
    sequences: &[Vec<Vec<u32>>],
    frequent_items: &[u32],
    min_count: usize,
    max_length: usize,
    found: &mut Vec<(Vec<Vec<u32>>, usize)>,
) {
    found.push((pattern.to_vec(), supporters.len()));
    let total_items: usize = pattern.iter().map(|e| e.len()).sum();
    if total_items >= max_length {
        return;
    }
    let last_max = *pattern.last().unwrap().last().unwrap();
    for &item in frequent_items {
        // i-extension: add a larger item to the last itemset.
        if item > last_max {
            let mut candidate = pattern.to_vec();
            candidate.last_mut().unwrap().push(item);
            try_candidate(
                candidate,
                supporters,
                sequences,
                frequent_items,
                min_count,
                max_length,
                found,
            );
        }
        // s-extension: start a new itemset.
        let mut candidate = pattern.to_vec();
        candidate.push(vec![item]);
        try_candidate(
            candidate,
            supporters,
            sequences,
            frequent_items,
            min_count,
            max_length,
            found,
        );
    }
}

fn try_candidate(
    candidate: Vec<Vec<u32>>,
    supporters: &[usize],
    sequences: &[Vec<Vec<u32>>],
    frequent_items: &[u32],
    min_count: usize,
    max_length: usize,
    found: &mut Vec<(Vec<Vec<u32>>, usize)>,
) {
    // Anti-monotone: only the parent's supporters can contain the extension.
    let next: Vec<usize> = supporters
        .iter()
        .copied()
        .filter(|&i| contains_interned(&sequences[i], &candidate))
        .collect();
    if next.len() >= min_count {
        grow(
            &candidate,
            &next,
            sequences,
            frequent_items,
            min_count,
            max_length,
            found,
        );
    }
}

fn contains_interned(sequence: &[Vec<u32>], pattern: &[Vec<u32>]) -> bool {
    let mut cursor = 0usize;
    for element in pattern {
        loop {
            if cursor >= sequence.len() {
                return false;
            }
            if is_sorted_subset(element, &sequence[cursor]) {
                cursor += 1;
                break;
            }
            cursor += 1;
        }
    }
    true
}

fn is_sorted_subset(small: &[u32], big: &[u32]) -> bool {
    let mut it = big.iter();
    'outer: for s in small {
        for b in it.by_ref() {
            match b.cmp(s) {
                std::cmp::Ordering::Equal => continue 'outer,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Less => {}
            }
        }
        return false;
    }
    true
}

/// Write patterns one per line: itemsets joined by `->`, items by `&`,
/// followed by a tab and the support count.
pub fn write_patterns<W: Write>(mut w: W, patterns: &[SequentialPattern]) -> Result<()> {
    for p in patterns {
        writeln!(w, "{p}\t{}", p.support)?;
    }
    Ok(())
}

/// Read the format written by [`write_patterns`].
pub fn read_patterns<R: Read>(reader: R) -> Result<Vec<SequentialPattern>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let (body, support) = text.rsplit_once('\t').ok_or_else(|| Error::Ingest {
            line: Some(i + 1),
            msg: "pattern line missing tab-separated support".into(),
        })?;
        let support = support.trim().parse::<usize>().map_err(|_| Error::Ingest {
            line: Some(i + 1),
            msg: format!("invalid support count {support:?}"),
        })?;
        let elements: Vec<BTreeSet<String>> = body
            .split("->")
            .map(|e| e.split('&').map(|s| s.to_string()).collect::<BTreeSet<_>>())
            .collect();
        if elements.iter().any(|e| e.iter().any(|c| c.is_empty())) {
            return Err(Error::Ingest {
                line: Some(i + 1),
                msg: format!("malformed pattern {body:?}"),
            });
        }
        out.push(SequentialPattern { elements, support });
    }
    Ok(out)
}
