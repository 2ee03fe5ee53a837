//! CP decomposition followed by per-mode k-means on the factor rows, with the
//! number of clusters chosen by the gap statistic.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterpath::Partition;
use crate::decomp::{cp_als, CpModel};
use crate::error::{CocoError, Result};
use crate::metrics::canonicalize;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x p`, row `c` is the centroid of cluster `c`.
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after initialization and after every Lloyd iteration.
    pub wcss_history: Vec<f64>,
}

const MAX_LLOYD: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows_of(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..points.nrows())
        .map(|i| points.row(i).iter().copied().collect())
        .collect()
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn nearest(r: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centers.iter().enumerate() {
        let d = sq_dist(r, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn centroids(rows: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let p = rows[0].len();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    sums
}

fn wcss_of(rows: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, &centers[l]))
        .sum()
}

/// Moves the worst-fitted point into each empty cluster.
fn repair_empty(rows: &[Vec<f64>], labels: &mut [usize], centers: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..rows.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&rows[a], &centers[labels[a]])
                    .total_cmp(&sq_dist(&rows[b], &centers[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        labels[far] = empty;
    }
}

fn lloyd(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let mut centers = plus_plus(rows, k, rng);
    let mut labels: Vec<usize> = rows.iter().map(|r| nearest(r, &centers).0).collect();
    repair_empty(rows, &mut labels, &centers, k);
    let mut history = vec![wcss_of(rows, &labels, &centers)];
    let mut iterations = 0;
    for _ in 0..MAX_LLOYD {
        iterations += 1;
        centers = centroids(rows, &labels, k);
        let mut next: Vec<usize> = rows
            .iter()
            .zip(&labels)
            .map(|(r, &l)| {
                let (c, d) = nearest(r, &centers);
                // keep the current label on ties so the loop terminates
                if d < sq_dist(r, &centers[l]) {
                    c
                } else {
                    l
                }
            })
            .collect();
        repair_empty(rows, &mut next, &centers, k);
        history.push(wcss_of(rows, &next, &centers));
        if next == labels {
            break;
        }
        labels = next;
    }
    let centers = centroids(rows, &labels, k);
    let wcss = wcss_of(rows, &labels, &centers);
    KMeansResult {
        labels,
        centroids: centers,
        wcss,
        iterations,
        wcss_history: history,
    }
}

fn relabel(mut r: KMeansResult) -> KMeansResult {
    let labels = canonicalize(&r.labels);
    let k = r.centroids.len();
    let mut order = vec![usize::MAX; k];
    for (&old, &new) in r.labels.iter().zip(&labels) {
        order[new] = old;
    }
    r.centroids = order.iter().map(|&o| r.centroids[o].clone()).collect();
    r.labels = labels;
    r
}

/// k-means++ seeded Lloyd iterations, best of `restarts` runs by WCSS.
/// Labels are canonical: cluster ids ordered by smallest member index.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(CocoError::param(
            "k",
            format!("need 1 <= k <= {n}, got {k}"),
        ));
    }
    if points.ncols() == 0 {
        return Err(CocoError::param("points", "need at least one column"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(CocoError::param("points", "non-finite coordinate"));
    }
    let rows = rows_of(points);
    let runs: Vec<KMeansResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(&rows, k, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.wcss < a.wcss { b } else { a })
        .expect("at least one restart");
    Ok(relabel(best))
}

pub const DEFAULT_REFERENCES: usize = 20;
const GAP_RESTARTS: usize = 5;
const LOG_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistic {
    pub k_values: Vec<usize>,
    pub gaps: Vec<f64>,
    /// `s_k = sd_k * sqrt(1 + 1/B)`.
    pub s: Vec<f64>,
    pub selected: usize,
}

/// Gap statistic with uniform reference draws over the bounding box.
pub fn gap_statistic_table(
    points: &DMatrix<f64>,
    k_candidates: &[usize],
    b_refs: usize,
    seed: u64,
) -> Result<GapStatistic> {
    if b_refs == 0 {
        return Err(CocoError::param(
            "b_refs",
            "need at least one reference draw",
        ));
    }
    let n = points.nrows();
    let mut ks: Vec<usize> = k_candidates
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= n)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(CocoError::param(
            "k_candidates",
            format!("no candidate in 1..={n}"),
        ));
    }
    let p = points.ncols();
    let lo: Vec<f64> = (0..p).map(|c| points.column(c).min()).collect();
    let hi: Vec<f64> = (0..p).map(|c| points.column(c).max()).collect();
    let refs: Vec<DMatrix<f64>> = (0..b_refs)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1_000 + b as u64);
            DMatrix::from_fn(n, p, |_, c| {
                if hi[c] > lo[c] {
                    rng.random_range(lo[c]..hi[c])
                } else {
                    lo[c]
                }
            })
        })
        .collect();
    let log_w = |m: &DMatrix<f64>, k: usize, s: u64| -> Result<f64> {
        Ok(kmeans(m, k, s, GAP_RESTARTS)?.wcss.max(LOG_FLOOR).ln())
    };
    let mut gaps = Vec::with_capacity(ks.len());
    let mut s = Vec::with_capacity(ks.len());
    for &k in &ks {
        let observed = log_w(points, k, seed)?;
        let reference: Vec<f64> = refs
            .iter()
            .enumerate()
            .map(|(b, m)| log_w(m, k, seed.wrapping_add(b as u64 + 1)))
            .collect::<Result<_>>()?;
        let bf = b_refs as f64;
        let mean = reference.iter().sum::<f64>() / bf;
        let sd = (reference.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / bf).sqrt();
        gaps.push(mean - observed);
        s.push(sd * (1.0 + 1.0 / bf).sqrt());
    }
    let selected = (0..ks.len())
        .find(|&i| i + 1 == ks.len() || gaps[i] >= gaps[i + 1] - s[i + 1])
        .map(|i| ks[i])
        .expect("last candidate always qualifies");
    Ok(GapStatistic {
        k_values: ks,
        gaps,
        s,
        selected,
    })
}

/// Smallest k with `Gap(k) >= Gap(k+1) - s_{k+1}`.
pub fn gap_statistic(
    points: &DMatrix<f64>,
    k_candidates: &[usize],
    b_refs: usize,
    seed: u64,
) -> Result<usize> {
    Ok(gap_statistic_table(points, k_candidates, b_refs, seed)?.selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub rank_candidates: Vec<usize>,
    pub k_candidates: Vec<usize>,
    pub b_refs: usize,
    pub restarts: usize,
    pub max_sweeps: usize,
    pub cp_tol: f64,
    /// Relative fit improvement below which a larger CP rank is not taken.
    pub min_improvement: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            rank_candidates: vec![2, 3, 4, 5],
            k_candidates: (1..=10).collect(),
            b_refs: DEFAULT_REFERENCES,
            restarts: 10,
            max_sweeps: 500,
            cp_tol: 1e-10,
            min_improvement: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub rank: usize,
    /// `(rank, fit)` for every candidate tried.
    pub rank_fits: Vec<(usize, f64)>,
    pub model: CpModel,
    pub partitions: Vec<Partition>,
}

/// Walks the sorted rank candidates and stops at the last rank whose
/// relative fit gain over its predecessor is at least `min_improvement`.
pub fn select_cp_rank(rank_fits: &[(usize, f64)], min_improvement: f64) -> usize {
    let mut chosen = rank_fits[0].0;
    for w in rank_fits.windows(2) {
        let (prev, cur) = (w[0].1, w[1].1);
        let gain = if prev.abs() > 0.0 {
            (cur - prev) / prev.abs()
        } else if cur > prev {
            f64::INFINITY
        } else {
            0.0
        };
        if gain < min_improvement {
            break;
        }
        chosen = w[1].0;
    }
    chosen
}

/// CP decomposition at a selected rank, then gap-statistic k-means on the
/// rows of each factor matrix scaled by `|weight|^(1/D)` per column.
pub fn cpd_kmeans(x: &DenseTensor, config: &BaselineConfig, seed: u64) -> Result<BaselineResult> {
    if config.rank_candidates.is_empty() || config.k_candidates.is_empty() {
        return Err(CocoError::param(
            "candidates",
            "rank and k candidates must be nonempty",
        ));
    }
    let mut ranks = config.rank_candidates.clone();
    ranks.sort_unstable();
    ranks.dedup();
    let models: Vec<CpModel> = ranks
        .iter()
        .map(|&r| cp_als(x, r, config.max_sweeps, config.cp_tol, seed))
        .collect::<Result<_>>()?;
    let rank_fits: Vec<(usize, f64)> = ranks
        .iter()
        .zip(&models)
        .map(|(&r, m)| (r, m.fit))
        .collect();
    let rank = select_cp_rank(&rank_fits, config.min_improvement);
    let model = models
        .into_iter()
        .find(|m| m.rank == rank)
        .expect("selected rank is a candidate");
    let order = x.order() as f64;
    let partitions = model
        .factors
        .iter()
        .enumerate()
        .map(|(d, f)| {
            let scaled = DMatrix::from_fn(f.nrows(), f.ncols(), |i, r| {
                f[(i, r)] * model.weights[r].abs().powf(1.0 / order)
            });
            let k = gap_statistic(
                &scaled,
                &config.k_candidates,
                config.b_refs,
                seed.wrapping_add(d as u64),
            )?;
            let km = kmeans(&scaled, k, seed.wrapping_add(d as u64), config.restarts)?;
            Ok(Partition {
                mode: d,
                labels: km.labels,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BaselineResult {
        rank,
        rank_fits,
        model,
        partitions,
    })
}
