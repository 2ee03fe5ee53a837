//! Projected-gradient solver for the dual of the fusion-penalized least
//! squares problem
//!
//! ```text
//! minimize  1/2 ||x - u||^2 + gamma * sum_d sum_{(i,j) in E_d} w_dij ||U x_d (e_i - e_j)^T||_F
//! ```
//!
//! The dual is `min_{lambda in C} 1/2 ||x - A^T lambda||^2` where `C` is a
//! product of Euclidean balls of radius `gamma * w_dl`, one per edge. Each
//! iteration computes the primal iterate `u = x - A^T lambda`, takes a
//! gradient step `lambda + eta * A u` and projects edge by edge. The operator
//! `A` stacks, for every edge `(i, j)` of every mode, the difference of the
//! mode-d subarrays `i` and `j`; it is never materialized.

use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::tensor::DenseTensor;
use crate::weights::ModeGraph;

#[derive(Debug, Clone)]
struct ModeBlock {
    stride: usize,
    nd: usize,
    n_minus: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    offset: usize,
}

/// Matrix-free fusion operator `A` built from per-mode edge lists.
#[derive(Debug, Clone)]
pub struct FusionOperator {
    dims: Vec<usize>,
    n: usize,
    modes: Vec<ModeBlock>,
    dual_len: usize,
}

/// Dual variables, one block of length `n_{-d}` per edge, laid out mode by
/// mode in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub data: Vec<f64>,
}

impl DualState {
    pub fn zeros(op: &FusionOperator) -> Self {
        Self::from_data(vec![0.0; op.dual_len])
    }

    pub fn from_data(data: Vec<f64>) -> Self {
        Self { data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    /// `1.9 / rho(A A^T)`, estimated by power iteration.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step_size: StepSize,
    pub max_iter: usize,
    /// Stop once `gap <= gap_tol * max(1, ||x||^2 / 2)`.
    pub gap_tol: f64,
    /// FISTA momentum on the dual, restarted whenever the gap increases.
    pub accelerate: bool,
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size: StepSize::Auto,
            max_iter: 100_000,
            gap_tol: 1e-8,
            accelerate: true,
            check_every: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u_hat: DenseTensor,
    pub dual: DualState,
    /// Absolute duality gap at the returned pair.
    pub gap: f64,
    /// Gap divided by `max(1, ||x||^2 / 2)`.
    pub relative_gap: f64,
    pub iterations: usize,
    pub primal_objective: f64,
    pub converged: bool,
    pub step_size: f64,
}

impl FusionOperator {
    pub fn new(dims: &[usize], graphs: &[ModeGraph]) -> Result<Self> {
        if graphs.len() != dims.len() {
            return Err(CocoError::DimensionMismatch(format!(
                "{} graphs for a {}-way tensor",
                graphs.len(),
                dims.len()
            )));
        }
        let n: usize = dims.iter().product();
        let mut modes = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for (d, g) in graphs.iter().enumerate() {
            let nd = dims[d];
            if g.mode != d || g.n_nodes != nd {
                return Err(CocoError::DimensionMismatch(format!(
                    "graph {d} is for mode {} with {} nodes, expected mode {d} with {nd}",
                    g.mode, g.n_nodes
                )));
            }
            for e in &g.edges {
                if e.i >= nd || e.j >= nd || e.i == e.j {
                    return Err(CocoError::DimensionMismatch(format!(
                        "invalid edge ({}, {}) in mode {d}",
                        e.i, e.j
                    )));
                }
                if !(e.w >= 0.0) || !e.w.is_finite() {
                    return Err(CocoError::param(
                        "weight",
                        format!("edge weight {} in mode {d}", e.w),
                    ));
                }
            }
            let stride: usize = dims[..d].iter().product();
            let n_minus = n / nd;
            let block = ModeBlock {
                stride,
                nd,
                n_minus,
                edges: g.edges.iter().map(|e| (e.i, e.j)).collect(),
                weights: g.edges.iter().map(|e| e.w).collect(),
                offset,
            };
            offset += block.edges.len() * n_minus;
            modes.push(block);
        }
        Ok(Self {
            dims: dims.to_vec(),
            n,
            modes,
            dual_len: offset,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of rows of `A`, `sum_d |E_d| n_{-d}`.
    pub fn dual_len(&self) -> usize {
        self.dual_len
    }

    pub fn edge_count(&self) -> usize {
        self.modes.iter().map(|m| m.edges.len()).sum()
    }

    /// `(mode, i, j, w, block range)` for every edge, in dual layout order.
    pub fn blocks(
        &self,
    ) -> impl Iterator<Item = (usize, usize, usize, f64, std::ops::Range<usize>)> + '_ {
        self.modes.iter().enumerate().flat_map(|(d, m)| {
            m.edges
                .iter()
                .zip(&m.weights)
                .enumerate()
                .map(move |(l, (&(i, j), &w))| {
                    let start = m.offset + l * m.n_minus;
                    (d, i, j, w, start..start + m.n_minus)
                })
        })
    }

    /// Stacked subarray differences `A u`.
    pub fn apply_a(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return Err(CocoError::DimensionMismatch(format!(
                "primal vector has length {}, expected {}",
                u.len(),
                self.n
            )));
        }
        let mut out = vec![0.0; self.dual_len];
        self.apply_a_into(u, &mut out);
        Ok(out)
    }

    /// Adjoint `A^T lambda`: scatter-add of `+lambda` into subarray `i` and
    /// `-lambda` into subarray `j` for each edge.
    pub fn apply_at(&self, lambda: &DualState) -> Result<Vec<f64>> {
        if lambda.data.len() != self.dual_len {
            return Err(CocoError::DimensionMismatch(format!(
                "dual vector has length {}, expected {}",
                lambda.data.len(),
                self.dual_len
            )));
        }
        let mut out = vec![0.0; self.n];
        self.apply_at_into(&lambda.data, &mut out);
        Ok(out)
    }

    /// Whether mode `m`'s subarrays are contiguous in memory (the last mode),
    /// so rows can be read from and written to the vector directly.
    fn contiguous(&self, m: &ModeBlock) -> bool {
        m.stride * m.nd == self.n
    }

    /// Calls `f(l, start, A_l u)` for every edge block `l` in dual layout
    /// order, `start` being the block's offset in the dual vector. Subarrays of
    /// all but the last mode are strided in memory, so those modes are first
    /// gathered into `ws.rows`; the full `A u` is never stored.
    fn for_each_diff(
        &self,
        u: &[f64],
        ws: &mut Workspace,
        mut f: impl FnMut(usize, usize, &[f64]),
    ) {
        let mut l = 0;
        for m in &self.modes {
            let nm = m.n_minus;
            ws.diff.resize(nm, 0.0);
            let direct = self.contiguous(m);
            if !direct {
                gather_rows(u, m.stride, m.nd, &mut ws.rows);
            }
            let src: &[f64] = if direct { u } else { &ws.rows };
            for (e, &(i, j)) in m.edges.iter().enumerate() {
                let (ri, rj) = (&src[i * nm..(i + 1) * nm], &src[j * nm..(j + 1) * nm]);
                for ((v, a), b) in ws.diff.iter_mut().zip(ri).zip(rj) {
                    *v = a - b;
                }
                f(l, m.offset + e * nm, &ws.diff);
                l += 1;
            }
        }
    }

    /// One fused sweep over the dual. Block `l` of `out` becomes
    /// `P_l(base + eta * A_l u)`, the base being `out` itself for a plain step
    /// and `lam + beta * (lam - out)` for a momentum step, and on return
    /// `acc = A^T out`. Each block is read twice: once to form the step and
    /// its norm, strip by strip so the strip is still in L1 for the norm, and
    /// once to scale it onto the ball while scattering.
    #[allow(clippy::too_many_arguments)]
    fn update_scatter(
        &self,
        u: &[f64],
        ws: &mut Workspace,
        out: &mut [f64],
        acc: &mut [f64],
        radii: &[f64],
        eta: f64,
        step: Step<'_>,
    ) {
        const STRIP: usize = 512;
        let mut l = 0;
        let mut filled = false;
        for m in &self.modes {
            let nm = m.n_minus;
            let direct = self.contiguous(m);
            if direct {
                if !filled {
                    acc.fill(0.0);
                    filled = true;
                }
            } else {
                gather_rows(u, m.stride, m.nd, &mut ws.rows);
                ws.rows_acc.clear();
                ws.rows_acc.resize(self.n, 0.0);
            }
            let src: &[f64] = if direct { u } else { &ws.rows };
            let dst: &mut [f64] = if direct { &mut *acc } else { &mut ws.rows_acc };
            for (e, &(i, j)) in m.edges.iter().enumerate() {
                let start = m.offset + e * nm;
                let (ri, rj) = (&src[i * nm..(i + 1) * nm], &src[j * nm..(j + 1) * nm]);
                let ob = &mut out[start..start + nm];
                let mut sq = 0.0;
                for k0 in (0..nm).step_by(STRIP) {
                    let k1 = (k0 + STRIP).min(nm);
                    let (o, a, b) = (&mut ob[k0..k1], &ri[k0..k1], &rj[k0..k1]);
                    match step {
                        Step::Plain => {
                            for ((o, a), b) in o.iter_mut().zip(a).zip(b) {
                                *o += eta * (a - b);
                            }
                        }
                        Step::Momentum { lam, beta } => {
                            let lb = &lam[start + k0..start + k1];
                            for (((o, &lv), a), b) in o.iter_mut().zip(lb).zip(a).zip(b) {
                                *o = lv + beta * (lv - *o) + eta * (a - b);
                            }
                        }
                    }
                    sq += dot(o, o);
                }
                let (r, nz) = (radii[l], sq.sqrt());
                l += 1;
                if nz > r && r == 0.0 {
                    ob.fill(0.0);
                    continue;
                }
                let (di, dj) = two_rows_mut(dst, i, j, nm);
                if nz > r {
                    let c = r / nz;
                    for ((v, yi), yj) in ob.iter_mut().zip(di).zip(dj) {
                        *v *= c;
                        *yi += *v;
                        *yj -= *v;
                    }
                } else {
                    for ((v, yi), yj) in ob.iter().zip(di).zip(dj) {
                        *yi += v;
                        *yj -= v;
                    }
                }
            }
            if !direct {
                scatter_rows(&ws.rows_acc, m.stride, m.nd, acc, filled);
                filled = true;
            }
        }
        if !filled {
            acc.fill(0.0);
        }
    }

    pub(crate) fn apply_a_into(&self, u: &[f64], out: &mut [f64]) {
        let mut ws = Workspace::default();
        self.for_each_diff(u, &mut ws, |_, start, d| {
            out[start..start + d.len()].copy_from_slice(d);
        });
    }

    fn apply_at_ws(&self, lambda: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let mut filled = false;
        for m in &self.modes {
            let nm = m.n_minus;
            let direct = self.contiguous(m);
            if direct {
                if !filled {
                    out.fill(0.0);
                    filled = true;
                }
            } else {
                ws.rows_acc.clear();
                ws.rows_acc.resize(self.n, 0.0);
            }
            let dst: &mut [f64] = if direct { &mut *out } else { &mut ws.rows_acc };
            for (e, &(i, j)) in m.edges.iter().enumerate() {
                let block = &lambda[m.offset + e * nm..m.offset + (e + 1) * nm];
                for (y, v) in dst[i * nm..(i + 1) * nm].iter_mut().zip(block) {
                    *y += v;
                }
                for (y, v) in dst[j * nm..(j + 1) * nm].iter_mut().zip(block) {
                    *y -= v;
                }
            }
            if !direct {
                scatter_rows(&ws.rows_acc, m.stride, m.nd, out, filled);
                filled = true;
            }
        }
        if !filled {
            out.fill(0.0);
        }
    }

    pub(crate) fn apply_at_into(&self, lambda: &[f64], out: &mut [f64]) {
        self.apply_at_ws(lambda, out, &mut Workspace::default());
    }

    /// Spectral radius of `A A^T`. `A^T A` is the Kronecker sum of the
    /// unweighted mode Laplacians, so its largest eigenvalue is the sum of
    /// their largest eigenvalues; each is found by power iteration on the
    /// `n_d`-dimensional Laplacian.
    pub fn spectral_radius(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| laplacian_spectral_radius(m.nd, &m.edges))
            .sum()
    }

    /// Penalty `sum_l w_l ||A_l u||` given precomputed `A u`.
    fn penalty_from(&self, au: &[f64]) -> f64 {
        self.blocks().map(|(_, _, _, w, r)| w * norm(&au[r])).sum()
    }

    fn radii(&self, gamma: f64) -> Vec<f64> {
        self.modes
            .iter()
            .flat_map(|m| m.weights.iter().map(move |w| gamma * w))
            .collect()
    }

    fn block_len_iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.modes
            .iter()
            .flat_map(|m| std::iter::repeat_n(m.n_minus, m.edges.len()))
    }
}

/// Base of a dual step in [`FusionOperator::update_scatter`].
#[derive(Clone, Copy)]
enum Step<'a> {
    Plain,
    Momentum { lam: &'a [f64], beta: f64 },
}

/// Rows `i` and `j` (distinct) of a row-major buffer with rows of `len`.
fn two_rows_mut(v: &mut [f64], i: usize, j: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    if i < j {
        let (a, b) = v.split_at_mut(j * len);
        (&mut a[i * len..(i + 1) * len], &mut b[..len])
    } else {
        let (a, b) = v.split_at_mut(i * len);
        (&mut b[..len], &mut a[j * len..(j + 1) * len])
    }
}

/// Fibers per tile in the stride-1 transposes.
const TILE: usize = 16;

/// Copies the mode subarrays of `u` (stride `s`, `nd` of them) into
/// consecutive rows of `rows`, each row in dual block order.
fn gather_rows(u: &[f64], s: usize, nd: usize, rows: &mut Vec<f64>) {
    let nm = u.len() / nd;
    rows.resize(u.len(), 0.0);
    if s == 1 {
        // transpose in tiles of fibers so each row is written in runs
        for (t, tile) in u.chunks(nd * TILE).enumerate() {
            let o0 = t * TILE;
            for (i, row) in rows.chunks_exact_mut(nm).enumerate() {
                for (y, fiber) in row[o0..].iter_mut().zip(tile.chunks_exact(nd)) {
                    *y = fiber[i];
                }
            }
        }
    } else {
        for (o, slab) in u.chunks_exact(s * nd).enumerate() {
            for (i, chunk) in slab.chunks_exact(s).enumerate() {
                rows[i * nm + o * s..i * nm + (o + 1) * s].copy_from_slice(chunk);
            }
        }
    }
}

/// Inverse of [`gather_rows`], adding into `out` or overwriting it.
fn scatter_rows(rows: &[f64], s: usize, nd: usize, out: &mut [f64], add: bool) {
    let nm = out.len() / nd;
    if s == 1 {
        for (t, tile) in out.chunks_mut(nd * TILE).enumerate() {
            let o0 = t * TILE;
            for (i, row) in rows.chunks_exact(nm).enumerate() {
                for (&v, fiber) in row[o0..].iter().zip(tile.chunks_exact_mut(nd)) {
                    fiber[i] = if add { fiber[i] + v } else { v };
                }
            }
        }
    } else {
        for (o, slab) in out.chunks_exact_mut(s * nd).enumerate() {
            for (i, chunk) in slab.chunks_exact_mut(s).enumerate() {
                let src = &rows[i * nm + o * s..i * nm + (o + 1) * s];
                if add {
                    chunk.iter_mut().zip(src).for_each(|(y, v)| *y += v);
                } else {
                    chunk.copy_from_slice(src);
                }
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Inner product with eight independent partial sums, so the reduction
/// vectorizes; the summation order is fixed, hence deterministic.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// Power iteration for the largest eigenvalue of a graph Laplacian.
fn laplacian_spectral_radius(nd: usize, edges: &[(usize, usize)]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    // deterministic, non-constant start vector
    let mut v: Vec<f64> = (0..nd)
        .map(|i| {
            let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
            (h as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    let mean = v.iter().sum::<f64>() / nd as f64;
    v.iter_mut().for_each(|a| *a -= mean);
    let mut w = vec![0.0; nd];
    let mut rho = 0.0;
    for _ in 0..10_000 {
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        w.fill(0.0);
        for &(i, j) in edges {
            let diff = v[i] - v[j];
            w[i] += diff;
            w[j] -= diff;
        }
        let next = dot(&v, &w);
        std::mem::swap(&mut v, &mut w);
        if (next - rho).abs() <= 1e-12 * next.abs() {
            rho = next;
            break;
        }
        rho = next;
    }
    // The Rayleigh quotient approaches from below; the final iterate's norm
    // ratio is a slightly tighter estimate.
    rho.max(norm(&v))
}

/// Scratch buffers reused across iterations.
#[derive(Default)]
struct Workspace {
    diff: Vec<f64>,
    rows: Vec<f64>,
    rows_acc: Vec<f64>,
}

/// Euclidean projection onto the ball of radius `r`.
pub fn project_ball(z: &[f64], r: f64) -> Vec<f64> {
    let mut out = z.to_vec();
    project_ball_in_place(&mut out, r);
    out
}

fn project_ball_in_place(z: &mut [f64], r: f64) {
    let nz = norm(z);
    if nz > r {
        if r == 0.0 {
            z.fill(0.0);
        } else {
            let scale = r / nz;
            z.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// `eta = 1.9 / rho(A A^T)`, inside the `2 / rho` convergence bound.
pub fn estimate_step_size(op: &FusionOperator) -> f64 {
    let rho = op.spectral_radius();
    if rho > 0.0 {
        1.9 / rho
    } else {
        1.0
    }
}

/// Primal objective `1/2 ||x - u||^2 + gamma * sum w ||A_l u||`.
pub fn primal_objective(op: &FusionOperator, x: &[f64], u: &[f64], gamma: f64) -> Result<f64> {
    let au = op.apply_a(u)?;
    let fit: f64 = x.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * fit + gamma * op.penalty_from(&au))
}

/// Duality gap `F(u) - G(lambda)` for `u = x - A^T lambda`:
/// `||u||^2 - <x, u> + gamma * sum_l w_l ||A_l u||`.
pub fn duality_gap(op: &FusionOperator, x: &[f64], u: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != u.len() {
        return Err(CocoError::DimensionMismatch(
            "x and u lengths differ".into(),
        ));
    }
    let au = op.apply_a(u)?;
    let quad = dot(u, u) - dot(x, u);
    Ok(quad + gamma * op.penalty_from(&au))
}

/// Solves for the estimator at one `gamma`, optionally warm-starting from a
/// previous dual (projected onto the new constraint set).
pub fn solve(
    x: &DenseTensor,
    op: &FusionOperator,
    gamma: f64,
    config: &SolverConfig,
    warm_start: Option<&DualState>,
) -> Result<SolveResult> {
    if x.dims() != op.dims() {
        return Err(CocoError::DimensionMismatch(format!(
            "tensor {:?} vs operator {:?}",
            x.dims(),
            op.dims()
        )));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(CocoError::param("gamma", "must be finite and nonnegative"));
    }
    if config.check_every == 0 {
        return Err(CocoError::param("check_every", "must be at least 1"));
    }
    let eta = match config.step_size {
        // momentum needs eta <= 1 / rho, the plain iteration only eta < 2 / rho
        StepSize::Auto if config.accelerate => estimate_step_size(op) / 1.9,
        StepSize::Auto => estimate_step_size(op),
        StepSize::Fixed(s) if s > 0.0 && s.is_finite() => s,
        StepSize::Fixed(s) => {
            return Err(CocoError::param(
                "step_size",
                format!("{s} is not positive"),
            ))
        }
    };
    let xv = x.vectorize();
    let scale = (0.5 * dot(xv, xv)).max(1.0);
    let tol = config.gap_tol * scale;
    let radii = op.radii(gamma);
    let lens: Vec<usize> = op.block_len_iter().collect();

    let project_all = |lam: &mut [f64]| {
        let mut start = 0;
        for (&r, &len) in radii.iter().zip(&lens) {
            project_ball_in_place(&mut lam[start..start + len], r);
            start += len;
        }
    };

    let mut lam = match warm_start {
        Some(w) if w.data.len() == op.dual_len => w.data.clone(),
        Some(w) => {
            return Err(CocoError::DimensionMismatch(format!(
                "warm start has length {}, expected {}",
                w.data.len(),
                op.dual_len
            )))
        }
        None => vec![0.0; op.dual_len],
    };
    project_all(&mut lam);

    let mut u = vec![0.0; op.n];
    let mut ws = Workspace::default();
    // FISTA keeps the previous iterate instead of the extrapolated point; the
    // extrapolation is formed block by block and the next iterate overwrites
    // the oldest one, so each sweep streams two dual vectors instead of four.
    let mut prev = if config.accelerate {
        lam.clone()
    } else {
        Vec::new()
    };
    let mut beta = 0.0f64;
    let mut t = 1.0f64;
    let mut prev_gap = f64::INFINITY;

    // A^T lam and A^T of the previous iterate, kept current so that no
    // separate adjoint sweep over the dual is needed; A^T of the extrapolated
    // point is formed on the fly from the two.
    let mut atl = vec![0.0; op.n];
    op.apply_at_ws(&lam, &mut atl, &mut ws);
    let mut at_old = vec![0.0; op.n];

    let primal_from = |at: &[f64], u: &mut [f64]| {
        for ((ui, xi), a) in u.iter_mut().zip(xv).zip(at) {
            *ui = xi - a;
        }
    };
    // gap at (u(lam), lam), with u holding x - A^T lam
    let gap_at = |lam: &[f64], u: &[f64], ws: &mut Workspace| {
        let mut gap = 0.0;
        op.for_each_diff(u, ws, |l, start, d| {
            gap += radii[l] * norm(d) - dot(d, &lam[start..start + d.len()]);
        });
        gap
    };

    let finish = |u: Vec<f64>, lam: Vec<f64>, gap: f64, iterations: usize, converged: bool| {
        let fit: f64 = xv.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
        let au = op.apply_a(&u).expect("primal length checked");
        let primal = 0.5 * fit + gamma * op.penalty_from(&au);
        Ok(SolveResult {
            u_hat: DenseTensor::new(x.dims().to_vec(), u).expect("same shape as x"),
            dual: DualState { data: lam },
            gap,
            relative_gap: gap / scale,
            iterations,
            primal_objective: primal,
            converged,
            step_size: eta,
        })
    };

    for it in 0..config.max_iter {
        let check = it % config.check_every == 0;
        if config.accelerate {
            for (((ui, xi), a), o) in u.iter_mut().zip(xv).zip(&atl).zip(&at_old) {
                *ui = xi - (a + beta * (a - o));
            }
            op.update_scatter(
                &u,
                &mut ws,
                &mut prev,
                &mut at_old,
                &radii,
                eta,
                Step::Momentum { lam: &lam, beta },
            );
            std::mem::swap(&mut lam, &mut prev);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            beta = (t - 1.0) / t_next;
            t = t_next;
            std::mem::swap(&mut atl, &mut at_old);
            if check {
                primal_from(&atl, &mut u);
                let gap = gap_at(&lam, &u, &mut ws);
                if !gap.is_finite() {
                    return Err(CocoError::Divergence { iteration: it });
                }
                if gap <= tol {
                    return finish(u, lam, gap, it + 1, true);
                }
                if gap > prev_gap {
                    t = 1.0;
                    beta = 0.0;
                }
                prev_gap = gap;
            }
        } else {
            primal_from(&atl, &mut u);
            if check {
                let gap = gap_at(&lam, &u, &mut ws);
                if !gap.is_finite() {
                    return Err(CocoError::Divergence { iteration: it });
                }
                if gap <= tol {
                    return finish(u, lam, gap, it + 1, true);
                }
            }
            op.update_scatter(&u, &mut ws, &mut lam, &mut atl, &radii, eta, Step::Plain);
        }
    }

    // out of iterations: report the pair (u(lam), lam)
    op.apply_at_ws(&lam, &mut atl, &mut ws);
    primal_from(&atl, &mut u);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(CocoError::Divergence {
            iteration: config.max_iter,
        });
    }
    let gap = gap_at(&lam, &u, &mut ws);
    finish(u, lam, gap, config.max_iter, gap <= tol)
}
