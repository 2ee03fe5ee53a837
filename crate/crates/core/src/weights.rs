//! Sparse per-mode similarity graphs and fusion weights.
//!
//! Weights are built from a denoised tensor: exact symmetrized k-nearest
//! neighbor edges between mode-d subarrays, Gaussian-kernel pre-weights with
//! a median bandwidth, then normalization so that each mode's weights sum to
//! `sqrt(n_d / n)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{heuristic_rank, tucker_hooi};
use crate::error::{CocoError, Result};
use crate::tensor::DenseTensor;

/// Weighted edge between mode-d subarrays `i < j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGraph {
    pub mode: usize,
    pub n_nodes: usize,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `tau_d = 1 / median squared distance over retained edges`.
    Median,
    /// One `tau_d` per mode.
    Fixed(Vec<f64>),
    /// `tau_d = 0`, uniform pre-weights.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    /// Starting k; increased per mode until the k-NN graph is connected.
    pub k_neighbors: usize,
    pub bandwidth: Bandwidth,
    /// Tucker ranks for denoising; `None` uses the heuristic per mode.
    pub tucker_ranks: Option<Vec<usize>>,
    /// Skip the Tucker step and build weights from the raw tensor.
    pub raw: bool,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 1,
            bandwidth: Bandwidth::Median,
            tucker_ranks: None,
            raw: false,
        }
    }
}

/// Pre-weights below this are floored. The kernel underflows for
/// well-separated subarrays; the floor keeps every k-NN edge in the graph,
/// keeps the fully coalesced end of the path within reach, and keeps the
/// solver's arithmetic clear of subnormal numbers.
pub const MIN_PREWEIGHT: f64 = 1e-3;

impl ModeGraph {
    pub fn weight_sum(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    pub fn is_connected(&self) -> bool {
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.i, e.j)).collect();
        component_count(self.n_nodes, &pairs) <= 1
    }

    /// Weight of edge `{a, b}` regardless of argument order.
    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.edges
            .iter()
            .find(|e| e.i == i && e.j == j)
            .map(|e| e.w)
    }

    /// Complete graph with uniform weights summing to `sqrt(n_d / n)`.
    pub fn uniform_complete(dims: &[usize], mode: usize) -> ModeGraph {
        let nd = dims[mode];
        let n: usize = dims.iter().product();
        let pairs = complete_edges(nd);
        let w = if pairs.is_empty() {
            0.0
        } else {
            (nd as f64 / n as f64).sqrt() / pairs.len() as f64
        };
        ModeGraph {
            mode,
            n_nodes: nd,
            edges: pairs.into_iter().map(|(i, j)| Edge { i, j, w }).collect(),
        }
    }
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub(crate) fn component_count(n: usize, pairs: &[(usize, usize)]) -> usize {
    let mut uf = UnionFind::new(n);
    for &(i, j) in pairs {
        uf.union(i, j);
    }
    (0..n).filter(|&x| uf.find(x) == x).count()
}

/// Connected-component labels (by smallest member index) of a graph.
pub(crate) fn component_labels(
    n: usize,
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Vec<usize> {
    let mut uf = UnionFind::new(n);
    for (i, j) in pairs {
        uf.union(i, j);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|x| {
            let r = uf.find(x);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Full matrix of squared Frobenius distances between mode-d subarrays.
pub fn pairwise_sq_distances(xt: &DenseTensor, mode: usize) -> Vec<Vec<f64>> {
    let nd = xt.dims()[mode];
    let rows: Vec<Vec<f64>> = (0..nd).map(|i| xt.subarray(mode, i)).collect();
    (0..nd)
        .into_par_iter()
        .map(|i| (0..nd).map(|j| sq_dist(&rows[i], &rows[j])).collect())
        .collect()
}

fn knn_from_distances(dist: &[Vec<f64>], k: usize) -> Vec<(usize, usize)> {
    let nd = dist.len();
    let mut pairs = Vec::new();
    for (i, row) in dist.iter().enumerate() {
        let mut others: Vec<usize> = (0..nd).filter(|&j| j != i).collect();
        // ties broken by lower index
        others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Exact symmetrized k-NN edge set between mode-d subarrays: `(i, j)` with
/// `i < j` is present when either is among the other's `k` nearest.
pub fn knn_edges(xt: &DenseTensor, mode: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    check_mode(xt, mode)?;
    if k == 0 {
        return Err(CocoError::param("k_neighbors", "must be at least 1"));
    }
    Ok(knn_from_distances(&pairwise_sq_distances(xt, mode), k))
}

/// Smallest `k >= k_start` whose symmetrized k-NN graph is connected.
pub fn ensure_connected(
    xt: &DenseTensor,
    mode: usize,
    k_start: usize,
) -> Result<(usize, Vec<(usize, usize)>)> {
    check_mode(xt, mode)?;
    let nd = xt.dims()[mode];
    if nd == 1 {
        return Ok((k_start.max(1), Vec::new()));
    }
    let dist = pairwise_sq_distances(xt, mode);
    let mut k = k_start.max(1);
    loop {
        let pairs = knn_from_distances(&dist, k);
        if k >= nd - 1 || component_count(nd, &pairs) == 1 {
            return Ok((k, pairs));
        }
        k += 1;
    }
}

/// Gaussian-kernel pre-weights `exp(-tau * ||X_i - X_j||^2)` on the given
/// edges, floored at [`MIN_PREWEIGHT`].
pub fn gaussian_preweights(
    xt: &DenseTensor,
    mode: usize,
    edges: &[(usize, usize)],
    tau: f64,
) -> Result<Vec<f64>> {
    check_mode(xt, mode)?;
    if !(tau >= 0.0) {
        return Err(CocoError::param("tau", "bandwidth must be nonnegative"));
    }
    let rows = subarray_rows(xt, mode, edges);
    Ok(edges
        .iter()
        .map(|&(i, j)| {
            if tau == 0.0 {
                1.0
            } else {
                (-tau * sq_dist(&rows[i], &rows[j]))
                    .exp()
                    .max(MIN_PREWEIGHT)
            }
        })
        .collect())
}

fn subarray_rows(xt: &DenseTensor, mode: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let nd = xt.dims()[mode];
    let mut used = vec![false; nd];
    for &(i, j) in edges {
        used[i] = true;
        used[j] = true;
    }
    (0..nd)
        .map(|i| {
            if used[i] {
                xt.subarray(mode, i)
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// Median of the retained edges' squared distances, inverted. Identical
/// subarrays (median 0) fall back to `tau = 0`.
pub fn median_bandwidth(xt: &DenseTensor, mode: usize, edges: &[(usize, usize)]) -> Result<f64> {
    check_mode(xt, mode)?;
    if edges.is_empty() {
        return Err(CocoError::EmptyEdges(mode));
    }
    let rows = subarray_rows(xt, mode, edges);
    let d2: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| sq_dist(&rows[i], &rows[j]))
        .collect();
    Ok(bandwidth_from_sq_distances(&d2))
}

pub(crate) fn bandwidth_from_sq_distances(d2: &[f64]) -> f64 {
    let mut v = d2.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let median = if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    };
    if median > 0.0 {
        1.0 / median
    } else {
        0.0
    }
}

/// Scales pre-weights to sum to `sqrt(n_d / n)`, keeping positive ones only.
pub fn normalize_mode_weights(
    pre: &[f64],
    edges: &[(usize, usize)],
    mode: usize,
    dims: &[usize],
) -> Result<ModeGraph> {
    if pre.len() != edges.len() {
        return Err(CocoError::DimensionMismatch(format!(
            "{} pre-weights for {} edges",
            pre.len(),
            edges.len()
        )));
    }
    if mode >= dims.len() {
        return Err(CocoError::ModeOutOfRange {
            mode,
            order: dims.len(),
        });
    }
    let total: f64 = pre.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) {
        return Err(CocoError::ZeroWeights(mode));
    }
    let n: usize = dims.iter().product();
    let scale = (dims[mode] as f64 / n as f64).sqrt() / total;
    let edges = edges
        .iter()
        .zip(pre)
        .filter(|(_, w)| **w > 0.0)
        .map(|(&(i, j), &w)| Edge {
            i: i.min(j),
            j: i.max(j),
            w: w * scale,
        })
        .collect();
    Ok(ModeGraph {
        mode,
        n_nodes: dims[mode],
        edges,
    })
}

fn check_mode(xt: &DenseTensor, mode: usize) -> Result<()> {
    if mode >= xt.order() {
        return Err(CocoError::ModeOutOfRange {
            mode,
            order: xt.order(),
        });
    }
    Ok(())
}

/// Weight graphs built from an already denoised tensor.
pub fn graphs_from_denoised(xt: &DenseTensor, config: &WeightConfig) -> Result<Vec<ModeGraph>> {
    if config.k_neighbors == 0 {
        return Err(CocoError::param("k_neighbors", "must be at least 1"));
    }
    if let Bandwidth::Fixed(taus) = &config.bandwidth {
        if taus.len() != xt.order() {
            return Err(CocoError::param(
                "bandwidth",
                format!("{} fixed bandwidths for {} modes", taus.len(), xt.order()),
            ));
        }
    }
    (0..xt.order())
        .map(|d| {
            if xt.dims()[d] == 1 {
                return Ok(ModeGraph {
                    mode: d,
                    n_nodes: 1,
                    edges: Vec::new(),
                });
            }
            let (_, edges) = ensure_connected(xt, d, config.k_neighbors)?;
            let tau = match &config.bandwidth {
                Bandwidth::Median => median_bandwidth(xt, d, &edges)?,
                Bandwidth::Fixed(t) => t[d],
                Bandwidth::Uniform => 0.0,
            };
            let pre = gaussian_preweights(xt, d, &edges, tau)?;
            normalize_mode_weights(&pre, &edges, d, xt.dims())
        })
        .collect()
}

/// Tucker-denoise `x`, then build one weight graph per mode.
pub fn build_graphs(x: &DenseTensor, config: &WeightConfig) -> Result<Vec<ModeGraph>> {
    if config.raw {
        return graphs_from_denoised(x, config);
    }
    let ranks = match &config.tucker_ranks {
        Some(r) => r.clone(),
        None => x.dims().iter().map(|&n| heuristic_rank(n)).collect(),
    };
    let xt = tucker_hooi(x, &ranks, 50, 1e-8)?.reconstruct();
    graphs_from_denoised(&xt, config)
}

/// Debug dump, one `mode,i,j,weight` row per edge with 1-based indices.
pub fn write_graphs_csv<W: Write>(graphs: &[ModeGraph], mut w: W) -> Result<()> {
    writeln!(w, "mode,i,j,weight")?;
    for g in graphs {
        for e in &g.edges {
            writeln!(w, "{},{},{},{:e}", g.mode + 1, e.i + 1, e.j + 1, e.w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mode-1 slices of a 3x1 matrix at positions 0, 1, 2 on a line.
    fn line3() -> DenseTensor {
        DenseTensor::new(vec![3, 1], vec![0.0, 1.0, 2.0]).unwrap()
    }

    #[test]
    fn knn_chain() {
        // d(1,2) = 1, d(2,3) = 1, d(1,3) = 2
        let e = knn_edges(&line3(), 0, 1).unwrap();
        assert_eq!(e, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn knn_complete_when_k_large() {
        let t = DenseTensor::from_fn(&[5, 2], |ix| (ix[0] * ix[0] + ix[1]) as f64).unwrap();
        assert_eq!(knn_edges(&t, 0, 4).unwrap().len(), 10);
    }

    #[test]
    fn identical_slices_are_linked() {
        let t = DenseTensor::new(vec![3, 2], vec![0.0, 5.0, 0.0, 1.0, 9.0, 1.0]).unwrap();
        // slices 0 and 2 identical
        for k in 1..=2 {
            assert!(knn_edges(&t, 0, k).unwrap().contains(&(0, 2)));
        }
    }

    #[test]
    fn preweight_values() {
        let t = line3();
        assert_eq!(
            gaussian_preweights(&t, 0, &[(0, 1), (0, 2)], 0.0).unwrap(),
            vec![1.0, 1.0]
        );
        let w = gaussian_preweights(&t, 0, &[(0, 1)], 1.0).unwrap();
        assert!((w[0] - (-1f64).exp()).abs() < 1e-15);
        let same = DenseTensor::new(vec![2, 2], vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(
            gaussian_preweights(&same, 0, &[(0, 1)], 4.0).unwrap(),
            vec![1.0]
        );
        assert!(gaussian_preweights(&t, 0, &[(0, 1)], -1.0).is_err());
    }

    #[test]
    fn bandwidths() {
        // squared distances {1, 4, 9}: points 0, 1, 3 give d2(0,1)=1, d2(1,3)=4, d2(0,3)=9
        let t = DenseTensor::new(vec![3, 1], vec![0.0, 1.0, 3.0]).unwrap();
        let tau = median_bandwidth(&t, 0, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!((tau - 0.25).abs() < 1e-15);
        // all squared distances 4
        let eq = DenseTensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap();
        assert_eq!(median_bandwidth(&eq, 0, &[(0, 1)]).unwrap(), 0.25);
        let same = DenseTensor::filled(&[3, 2], 1.0).unwrap();
        assert_eq!(median_bandwidth(&same, 0, &[(0, 1), (1, 2)]).unwrap(), 0.0);
        assert!(matches!(
            median_bandwidth(&same, 0, &[]),
            Err(CocoError::EmptyEdges(0))
        ));
    }

    #[test]
    fn normalization() {
        let dims = [4, 4, 4];
        let g = normalize_mode_weights(&[1.0, 3.0], &[(0, 1), (1, 2)], 0, &dims).unwrap();
        let s = (4.0f64 / 64.0).sqrt();
        assert!((g.edges[0].w - 0.25 * s).abs() < 1e-15);
        assert!((g.edges[1].w - 0.75 * s).abs() < 1e-15);
        let single = normalize_mode_weights(&[0.3], &[(2, 0)], 1, &dims).unwrap();
        assert_eq!(single.edges[0].w, s);
        assert_eq!((single.edges[0].i, single.edges[0].j), (0, 2));
        let scaled = normalize_mode_weights(&[7.0, 21.0], &[(0, 1), (1, 2)], 0, &dims).unwrap();
        for (a, b) in g.edges.iter().zip(&scaled.edges) {
            assert!((a.w - b.w).abs() < 1e-15);
        }
        assert!(matches!(
            normalize_mode_weights(&[0.0], &[(0, 1)], 0, &dims),
            Err(CocoError::ZeroWeights(0))
        ));
    }

    #[test]
    fn connectivity_search() {
        // two tight blobs of three slices each, far apart
        let vals = [0.0, 0.1, 0.2, 100.0, 100.1, 100.2];
        let t = DenseTensor::new(vec![6, 1], vals.to_vec()).unwrap();
        assert_eq!(component_count(6, &knn_edges(&t, 0, 1).unwrap()), 2);
        let (k, edges) = ensure_connected(&t, 0, 1).unwrap();
        assert_eq!(component_count(6, &edges), 1);
        // brute-force union-find check of every smaller k
        for smaller in 1..k {
            assert!(component_count(6, &knn_edges(&t, 0, smaller).unwrap()) > 1);
        }
        let (k1, e1) = ensure_connected(&line3(), 0, 1).unwrap();
        assert_eq!((k1, e1), (1, vec![(0, 1), (1, 2)]));
        let single = DenseTensor::filled(&[1, 3], 1.0).unwrap();
        assert!(ensure_connected(&single, 0, 1).unwrap().1.is_empty());
    }

    #[test]
    fn uniform_complete_weights() {
        let g = ModeGraph::uniform_complete(&[5, 3, 2], 0);
        assert_eq!(g.edges.len(), 10);
        let expect = (5.0f64 / 30.0).sqrt() / 10.0;
        assert!(g.edges.iter().all(|e| (e.w - expect).abs() < 1e-15));
        assert_eq!(g.weight(3, 1), g.weight(1, 3));
    }

    #[test]
    fn csv_dump_is_one_based() {
        let g = normalize_mode_weights(&[1.0], &[(0, 1)], 0, &[2, 2]).unwrap();
        let mut buf = Vec::new();
        write_graphs_csv(&[g], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("mode,i,j,weight"));
        assert!(lines.next().unwrap().starts_with("1,1,2,"));
    }
}
