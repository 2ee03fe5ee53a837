//! Partition agreement: Adjusted Rand Index and Variation of Information.

use std::collections::HashMap;

use crate::error::{CocoError, Result};

struct Contingency {
    n: usize,
    cells: HashMap<(usize, usize), usize>,
    rows: HashMap<usize, usize>,
    cols: HashMap<usize, usize>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(CocoError::DimensionMismatch(format!(
            "label vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(CocoError::param("labels", "need at least one item"));
    }
    let mut c = Contingency {
        n: a.len(),
        cells: HashMap::new(),
        rows: HashMap::new(),
        cols: HashMap::new(),
    };
    for (&x, &y) in a.iter().zip(b) {
        *c.cells.entry((x, y)).or_default() += 1;
        *c.rows.entry(x).or_default() += 1;
        *c.cols.entry(y).or_default() += 1;
    }
    Ok(c)
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Hubert-Arabie adjusted Rand index. Returns 1 when the chance-corrected
/// denominator vanishes and the partitions agree (e.g. both are one cluster).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = contingency(a, b)?;
    let index: f64 = c.cells.values().map(|&k| choose2(k)).sum();
    let sum_a: f64 = c.rows.values().map(|&k| choose2(k)).sum();
    let sum_b: f64 = c.cols.values().map(|&k| choose2(k)).sum();
    let total = choose2(c.n);
    let expected = if total > 0.0 {
        sum_a * sum_b / total
    } else {
        0.0
    };
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        // both partitions trivial in the same way
        return Ok(if index == max_index { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Variation of information `H(a) + H(b) - 2 I(a; b)` in nats.
pub fn variation_of_information(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = contingency(a, b)?;
    let n = c.n as f64;
    let vi: f64 = c
        .cells
        .iter()
        .map(|(&(x, y), &k)| {
            let pxy = k as f64 / n;
            let px = c.rows[&x] as f64 / n;
            let py = c.cols[&y] as f64 / n;
            -pxy * ((pxy / px).ln() + (pxy / py).ln())
        })
        .sum();
    Ok(vi.max(0.0))
}

/// Element-level co-cluster labels: each tensor element gets the id of the
/// tuple of its mode labels, enumerated in first-seen order over the
/// mode-1-fastest layout.
pub fn element_labels(mode_labels: &[Vec<usize>]) -> Vec<usize> {
    let dims: Vec<usize> = mode_labels.iter().map(|l| l.len()).collect();
    let n: usize = dims.iter().product();
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut idx = vec![0usize; dims.len()];
    let mut key = vec![0usize; dims.len()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for (d, k) in key.iter_mut().enumerate() {
            *k = mode_labels[d][idx[d]];
        }
        let next = ids.len();
        out.push(*ids.entry(key.clone()).or_insert(next));
        crate::tensor::increment(&mut idx, &dims);
    }
    out
}

/// Relabels to contiguous ids ordered by smallest member index.
pub fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}
