//! Partition extraction, eBIC, and the warm-started regularization path.

use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::solver::{solve, DualState, FusionOperator, SolverConfig};
use crate::tensor::DenseTensor;
use crate::weights::{component_labels, ModeGraph};

/// Cluster labels along one mode, contiguous ids assigned in order of each
/// cluster's smallest member index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub mode: usize,
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Member indices of every cluster.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            g[l].push(i);
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct SolutionPoint {
    pub gamma: f64,
    pub u_hat: DenseTensor,
    pub partitions: Vec<Partition>,
    pub co_cluster_count: usize,
    pub rss: f64,
    pub ebic: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every edge difference is below the fusion threshold.
    pub coalesced: bool,
}

#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub points: Vec<SolutionPoint>,
    pub selected: usize,
}

impl SolutionPath {
    pub fn selected_point(&self) -> &SolutionPoint {
        &self.points[self.selected]
    }

    pub fn total_iterations(&self) -> usize {
        self.points.iter().map(|p| p.iterations).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub solver: SolverConfig,
    /// Relative fusion tolerance; subarrays fuse when their difference norm
    /// is at most `fuse_tol * ||X||_F / sqrt(n)`.
    pub fuse_tol: f64,
    pub warm_start: bool,
    /// Number of grid points for the automatic grid, including `gamma = 0`.
    pub grid_size: usize,
    /// Cap on the doubling search for the coalescing gamma.
    pub max_doublings: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            fuse_tol: 1e-4,
            warm_start: true,
            grid_size: 50,
            max_doublings: 40,
        }
    }
}

/// Scale used by the fusion threshold, the root-mean-square entry of `x`.
pub fn fusion_scale(x: &DenseTensor) -> f64 {
    x.frobenius_norm() / (x.len() as f64).sqrt()
}

/// Connected components of the subgraph of edges whose subarray difference
/// in `u_hat` is at most `fuse_tol * scale`.
pub fn extract_mode_clusters(
    u_hat: &DenseTensor,
    graph: &ModeGraph,
    fuse_tol: f64,
    scale: f64,
) -> Partition {
    let threshold = fuse_tol * scale;
    let d = graph.mode;
    let rows: Vec<Vec<f64>> = (0..graph.n_nodes).map(|i| u_hat.subarray(d, i)).collect();
    let fused = graph.edges.iter().filter_map(|e| {
        let diff: f64 = rows[e.i]
            .iter()
            .zip(&rows[e.j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (diff <= threshold).then_some((e.i, e.j))
    });
    Partition {
        mode: d,
        labels: component_labels(graph.n_nodes, fused),
    }
}

/// `n log(rss / n) + 2 df log(n)`, with `rss` floored at `n * f64::EPSILON`.
pub fn ebic(rss: f64, n: usize, df: usize) -> f64 {
    let nf = n as f64;
    let rss = rss.max(nf * f64::EPSILON);
    nf * (rss / nf).ln() + 2.0 * df as f64 * nf.ln()
}

/// Ascending gamma grid. With `gamma_min > 0` the `count` points are
/// log-spaced over `[gamma_min, gamma_max]`. With `gamma_min == 0`, zero is
/// prepended to `count - 1` positive points spaced one decade apart and
/// ending at `gamma_max`.
pub fn gamma_grid(gamma_min: f64, gamma_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(gamma_min >= 0.0) || !(gamma_max > gamma_min) || !gamma_max.is_finite() {
        return Err(CocoError::InvalidGrid(format!(
            "need 0 <= gamma_min < gamma_max, got [{gamma_min}, {gamma_max}]"
        )));
    }
    if count < 2 {
        return Err(CocoError::InvalidGrid(format!("count {count} < 2")));
    }
    if gamma_min == 0.0 {
        let positives = count - 1;
        let lo = gamma_max * 10f64.powi(-(positives as i32 - 1));
        let mut g = vec![0.0];
        g.extend(logspace(lo, gamma_max, positives));
        return Ok(g);
    }
    Ok(logspace(gamma_min, gamma_max, count))
}

fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == count - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Solves at a single gamma (cold start) and extracts the partitions.
pub fn fit_gamma(
    x: &DenseTensor,
    graphs: &[ModeGraph],
    gamma: f64,
    config: &PathConfig,
) -> Result<SolutionPoint> {
    let op = FusionOperator::new(x.dims(), graphs)?;
    Ok(evaluate_point(x, &op, graphs, gamma, config, None)?.0)
}

fn evaluate_point(
    x: &DenseTensor,
    op: &FusionOperator,
    graphs: &[ModeGraph],
    gamma: f64,
    config: &PathConfig,
    warm: Option<&DualState>,
) -> Result<(SolutionPoint, DualState)> {
    let r = solve(x, op, gamma, &config.solver, warm)?;
    let scale = fusion_scale(x);
    let partitions: Vec<Partition> = graphs
        .iter()
        .map(|g| extract_mode_clusters(&r.u_hat, g, config.fuse_tol, scale))
        .collect();
    let co_cluster_count = partitions.iter().map(Partition::n_clusters).product();
    let rss = x.distance(&r.u_hat)?.powi(2);
    let au = op.apply_a(r.u_hat.vectorize())?;
    let threshold = config.fuse_tol * scale;
    let coalesced = op
        .blocks()
        .all(|(.., range)| au[range].iter().map(|v| v * v).sum::<f64>().sqrt() <= threshold);
    let point = SolutionPoint {
        gamma,
        co_cluster_count,
        rss,
        ebic: ebic(rss, x.len(), co_cluster_count),
        gap: r.gap,
        iterations: r.iterations,
        converged: r.converged,
        coalesced,
        partitions,
        u_hat: r.u_hat,
    };
    Ok((point, r.dual))
}

/// Solves along an ascending grid, warm-starting each dual from the previous
/// solution, stopping once the estimate has fully coalesced. The selected
/// point minimizes eBIC, ties going to the smaller gamma.
pub fn solve_path(
    x: &DenseTensor,
    graphs: &[ModeGraph],
    grid: &[f64],
    config: &PathConfig,
) -> Result<SolutionPath> {
    if grid.is_empty() {
        return Err(CocoError::InvalidGrid("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CocoError::InvalidGrid(
            "grid must be strictly increasing".into(),
        ));
    }
    let op = FusionOperator::new(x.dims(), graphs)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut dual: Option<DualState> = None;
    for &gamma in grid {
        let warm = if config.warm_start {
            dual.as_ref()
        } else {
            None
        };
        let (point, next) = evaluate_point(x, &op, graphs, gamma, config, warm)?;
        let done = point.coalesced;
        points.push(point);
        dual = Some(next);
        if done {
            break;
        }
    }
    let selected = select_min_ebic(&points);
    Ok(SolutionPath { points, selected })
}

/// Minimum-eBIC point, ties to the smaller gamma. Saturated points (every
/// element its own co-cluster, so no residual degrees of freedom) are only
/// eligible when nothing else is: their residual goes to zero with gamma and
/// the log term would dominate.
pub fn select_min_ebic(points: &[SolutionPoint]) -> usize {
    let saturated = |p: &SolutionPoint| p.co_cluster_count >= p.u_hat.len() && p.u_hat.len() > 1;
    let any_fused = points.iter().any(|p| !saturated(p));
    let mut best: Option<usize> = None;
    for (k, p) in points.iter().enumerate() {
        if any_fused && saturated(p) {
            continue;
        }
        if best.is_none_or(|b| p.ebic < points[b].ebic) {
            best = Some(k);
        }
    }
    best.unwrap_or(0)
}

/// Grid from a doubling search: gamma = 1, 2, 4, ... is solved (warm
/// started) until the estimate coalesces or `max_doublings` is reached. The
/// positive part of the grid is log-spaced from the largest doubling value at
/// which nothing had fused (or `2^-10` if even gamma = 1 fused something) up to
/// the final doubling value, and `gamma = 0` is prepended.
pub fn auto_grid(x: &DenseTensor, graphs: &[ModeGraph], config: &PathConfig) -> Result<Vec<f64>> {
    if config.grid_size < 3 {
        return Err(CocoError::InvalidGrid(
            "automatic grid needs at least 3 points".into(),
        ));
    }
    let op = FusionOperator::new(x.dims(), graphs)?;
    let n_total = x.len();
    let mut gamma = 1.0f64;
    let mut lo: Option<f64> = None;
    let mut dual: Option<DualState> = None;
    let mut hi = gamma;
    for _ in 0..=config.max_doublings {
        let (point, next) = evaluate_point(x, &op, graphs, gamma, config, dual.as_ref())?;
        dual = Some(next);
        hi = gamma;
        if point.co_cluster_count == n_total {
            lo = Some(gamma);
        }
        if point.coalesced {
            break;
        }
        gamma *= 2.0;
    }
    let lo = lo.unwrap_or(2f64.powi(-10));
    let mut grid = vec![0.0];
    if lo < hi {
        grid.extend(logspace(lo, hi, config.grid_size - 1));
    } else {
        grid.push(hi);
    }
    Ok(grid)
}

/// Automatic grid followed by the warm-started path.
pub fn solve_auto_path(
    x: &DenseTensor,
    graphs: &[ModeGraph],
    config: &PathConfig,
) -> Result<SolutionPath> {
    let grid = auto_grid(x, graphs, config)?;
    solve_path(x, graphs, &grid, config)
}

/// Means of `x` over each co-cluster, as a `k_1 x ... x k_D` tensor.
pub fn co_cluster_means(x: &DenseTensor, partitions: &[Partition]) -> Result<DenseTensor> {
    if partitions.len() != x.order() {
        return Err(CocoError::DimensionMismatch(format!(
            "{} partitions for a {}-way tensor",
            partitions.len(),
            x.order()
        )));
    }
    for (p, &n) in partitions.iter().zip(x.dims()) {
        if p.labels.len() != n {
            return Err(CocoError::DimensionMismatch(format!(
                "mode {} partition has {} labels for {} subarrays",
                p.mode,
                p.labels.len(),
                n
            )));
        }
    }
    let kdims: Vec<usize> = partitions.iter().map(|p| p.n_clusters().max(1)).collect();
    let m: usize = kdims.iter().product();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    let mut idx = vec![0usize; x.order()];
    for &v in x.vectorize() {
        let mut off = 0;
        let mut stride = 1;
        for (d, p) in partitions.iter().enumerate() {
            off += p.labels[idx[d]] * stride;
            stride *= kdims[d];
        }
        sums[off] += v;
        counts[off] += 1;
        crate::tensor::increment(&mut idx, x.dims());
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    DenseTensor::new(kdims, means)
}
