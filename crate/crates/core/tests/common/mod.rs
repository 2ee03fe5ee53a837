//! Shared test helpers: dense Kronecker-product oracles, random instance
//! generators, and the property checks used by both the proptest suite and
//! the acceptance runner.

#![allow(dead_code)]

use coco_core::baseline::kmeans;
use coco_core::decomp::tucker_hooi;
use coco_core::solver::project_ball;
use coco_core::{
    build_graphs, DenseTensor, DualState, Edge, FusionOperator, ModeGraph, WeightConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> DenseTensor {
    let n = dims.iter().product();
    DenseTensor::new(dims.to_vec(), normal_vec(rng, n)).unwrap()
}

/// Random connected graph per mode: a random spanning tree plus extra edges,
/// with positive weights.
pub fn random_graphs(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<ModeGraph> {
    dims.iter()
        .enumerate()
        .map(|(mode, &nd)| {
            let mut pairs = std::collections::BTreeSet::new();
            for v in 1..nd {
                let u = rng.random_range(0..v);
                pairs.insert((u, v));
            }
            for _ in 0..nd {
                let a = rng.random_range(0..nd);
                let b = rng.random_range(0..nd);
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
            ModeGraph {
                mode,
                n_nodes: nd,
                edges: pairs
                    .into_iter()
                    .map(|(i, j)| Edge {
                        i,
                        j,
                        w: rng.random_range(0.1..2.0),
                    })
                    .collect(),
            }
        })
        .collect()
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// `M_D kron ... kron M_1`, the ordering matching mode-1-fastest vectorization.
pub fn kron_reversed(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for m in mats.iter().rev() {
        out = out.kronecker(m);
    }
    out
}

/// Explicit fusion matrix: one block `I kron .. kron (e_i - e_j)^T kron .. kron I`
/// per edge, stacked mode by mode in edge order. Edge weights enter through
/// the dual ball radii, not the operator.
pub fn dense_fusion_matrix(dims: &[usize], graphs: &[ModeGraph]) -> DMatrix<f64> {
    let n: usize = dims.iter().product();
    let mut blocks = Vec::new();
    for (d, g) in graphs.iter().enumerate() {
        for e in &g.edges {
            let mut diff = DMatrix::zeros(1, dims[d]);
            diff[(0, e.i)] = 1.0;
            diff[(0, e.j)] = -1.0;
            let mats: Vec<DMatrix<f64>> = dims
                .iter()
                .enumerate()
                .map(|(k, &nk)| if k == d { diff.clone() } else { identity(nk) })
                .collect();
            blocks.push(kron_reversed(&mats));
        }
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut a = DMatrix::zeros(rows, n);
    let mut r = 0;
    for b in blocks {
        a.view_mut((r, 0), (b.nrows(), n)).copy_from(&b);
        r += b.nrows();
    }
    a
}

/// Long-run dense projected gradient on the dual, stopped once the gap is at
/// most `tol * max(1, ||x||^2 / 2)` or after `max_iter` iterations.
pub fn oracle_solve(
    a: &DMatrix<f64>,
    block: usize,
    weights: &[f64],
    x: &[f64],
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let x = DVector::from_column_slice(x);
    let ata = a.transpose() * a;
    let l = ata.symmetric_eigen().eigenvalues.max();
    let eta = 1.0 / l.max(f64::MIN_POSITIVE);
    let mut lam = DVector::zeros(a.nrows());
    let scale = (0.5 * x.norm_squared()).max(1.0);
    let mut u = x.clone();
    for it in 0..max_iter {
        u = &x - a.transpose() * &lam;
        let au = a * &u;
        if it % 100 == 0 {
            let gap: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let seg = au.rows(k * block, block);
                    let l_seg = lam.rows(k * block, block);
                    gamma * w * seg.norm() - seg.dot(&l_seg)
                })
                .sum();
            if gap <= tol * scale {
                break;
            }
        }
        let z = &lam + au * eta;
        for (k, &w) in weights.iter().enumerate() {
            let r = gamma * w;
            let seg = z.rows(k * block, block).clone_owned();
            let nrm = seg.norm();
            let p = if nrm > r { seg * (r / nrm) } else { seg };
            lam.rows_mut(k * block, block).copy_from(&p);
        }
    }
    u.as_slice().to_vec()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn random_dims(rng: &mut ChaCha8Rng, max_order: usize, max_len: usize) -> Vec<usize> {
    let order = rng.random_range(2..=max_order);
    (0..order).map(|_| rng.random_range(2..=max_len)).collect()
}

/// `<A u, lambda> = <u, A^T lambda>` and `A` matches the explicit Kronecker matrix.
pub fn check_adjoint(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let dims = random_dims(&mut r, 4, 4);
    let graphs = random_graphs(&mut r, &dims);
    let op = FusionOperator::new(&dims, &graphs).map_err(|e| e.to_string())?;
    let u = normal_vec(&mut r, op.n());
    let lam = normal_vec(&mut r, op.dual_len());
    let au = op.apply_a(&u).unwrap();
    let atl = op.apply_at(&DualState::from_data(lam.clone())).unwrap();
    let lhs = dot(&au, &lam);
    let rhs = dot(&u, &atl);
    let tol = 1e-12 * (norm(&au) * norm(&lam) + norm(&u) * norm(&atl)).max(1.0);
    if (lhs - rhs).abs() > tol {
        return Err(format!("dims {dims:?}: <Au,l> = {lhs}, <u,A^T l> = {rhs}"));
    }
    let dense = dense_fusion_matrix(&dims, &graphs);
    let expect = &dense * DVector::from_column_slice(&u);
    let err = rel_err(&au, expect.as_slice());
    if err > 1e-12 {
        return Err(format!(
            "dims {dims:?}: A u differs from dense Kronecker form by {err}"
        ));
    }
    Ok(())
}

/// `(X x_1 M_1 ... x_D M_D)_(d) = M_d X_(d) (M_D kron .. kron M_{d+1} kron M_{d-1} kron .. kron M_1)^T`.
pub fn check_kronecker_identity(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let dims = random_dims(&mut r, 4, 4);
    let x = random_tensor(&mut r, &dims);
    let mats: Vec<DMatrix<f64>> = dims
        .iter()
        .map(|&n| {
            let m = r.random_range(1..=4);
            DMatrix::from_vec(m, n, normal_vec(&mut r, m * n))
        })
        .collect();
    let mut y = x.clone();
    for (d, m) in mats.iter().enumerate() {
        y = y.mode_product(d, m).map_err(|e| e.to_string())?;
    }
    for d in 0..dims.len() {
        let others: Vec<DMatrix<f64>> = mats
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != d)
            .map(|(_, m)| m.clone())
            .collect();
        let rhs =
            &mats[d] * x.matricize(d).unwrap().to_matrix() * kron_reversed(&others).transpose();
        let lhs = y.matricize(d).unwrap().to_matrix();
        let err = (&lhs - &rhs).norm() / rhs.norm().max(1.0);
        if err > 1e-12 {
            return Err(format!("dims {dims:?} mode {d}: error {err}"));
        }
    }
    Ok(())
}

/// Projection lands in the ball, fixes interior points, and satisfies the
/// variational inequality against random points of the ball.
pub fn check_projection(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let len = r.random_range(1..=40);
    let scale = 10f64.powf(r.random_range(-6.0..6.0));
    let z: Vec<f64> = normal_vec(&mut r, len).iter().map(|v| v * scale).collect();
    let radius = if r.random_bool(0.1) {
        0.0
    } else {
        norm(&z) * r.random_range(0.0..2.0)
    };
    let p = project_ball(&z, radius);
    if norm(&p) > radius * (1.0 + 1e-12) {
        return Err(format!("||P(z)|| = {} > r = {radius}", norm(&p)));
    }
    if norm(&z) <= radius && p != z {
        return Err("interior point moved".into());
    }
    let resid: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
    for _ in 0..5 {
        let mut y = normal_vec(&mut r, len);
        let ny = norm(&y);
        let t = radius * r.random_range(0.0..1.0f64) / ny.max(f64::MIN_POSITIVE);
        y.iter_mut().for_each(|v| *v *= t);
        let dir: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        let vi = dot(&resid, &dir);
        if vi > 1e-10 * norm(&resid) * norm(&dir) + 1e-300 {
            return Err(format!("variational inequality violated: {vi}"));
        }
    }
    Ok(())
}

/// Lloyd iterations never increase the within-cluster sum of squares.
pub fn check_lloyd_monotone(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(2..=40);
    let p = r.random_range(1..=4);
    let k = r.random_range(1..=n.min(6));
    let pts = DMatrix::from_vec(n, p, normal_vec(&mut r, n * p));
    let res = kmeans(&pts, k, seed, 1).map_err(|e| e.to_string())?;
    for w in res.wcss_history.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-12) + 1e-12 {
            return Err(format!("wcss rose from {} to {}", w[0], w[1]));
        }
    }
    Ok(())
}

/// HOOI sweeps never decrease the Tucker fit.
pub fn check_hooi_monotone(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let dims = random_dims(&mut r, 3, 6);
    let x = random_tensor(&mut r, &dims);
    let ranks: Vec<usize> = dims.iter().map(|&n| r.random_range(1..=n)).collect();
    let m = tucker_hooi(&x, &ranks, 20, 0.0).map_err(|e| e.to_string())?;
    for w in m.fit_history.windows(2) {
        if w[1] < w[0] - 1e-10 {
            return Err(format!(
                "dims {dims:?} ranks {ranks:?}: fit fell from {} to {}",
                w[0], w[1]
            ));
        }
    }
    Ok(())
}

fn random_weight_input(seed: u64) -> (Vec<usize>, DenseTensor, WeightConfig) {
    let mut r = rng(seed);
    let dims = random_dims(&mut r, 3, 7);
    let x = random_tensor(&mut r, &dims);
    let config = WeightConfig {
        k_neighbors: r.random_range(1..=3),
        raw: r.random_bool(0.3),
        ..WeightConfig::default()
    };
    (dims, x, config)
}

/// Each mode's weights sum to `sqrt(n_d / n)`.
pub fn check_weight_sums(seed: u64) -> Result<(), String> {
    let (dims, x, config) = random_weight_input(seed);
    let graphs = build_graphs(&x, &config).map_err(|e| e.to_string())?;
    let n: usize = dims.iter().product();
    for (d, g) in graphs.iter().enumerate() {
        let target = (dims[d] as f64 / n as f64).sqrt();
        let sum: f64 = g.edges.iter().map(|e| e.w).sum();
        if (sum - target).abs() > 1e-12 {
            return Err(format!("dims {dims:?} mode {d}: sum {sum} vs {target}"));
        }
        if g.edges.iter().any(|e| e.w.is_nan() || e.w <= 0.0) {
            return Err(format!("mode {d} has a non-positive weight"));
        }
    }
    Ok(())
}

/// Every emitted mode graph is connected, checked with an independent
/// breadth-first search.
pub fn check_connectivity(seed: u64) -> Result<(), String> {
    let (dims, x, config) = random_weight_input(seed);
    let graphs = build_graphs(&x, &config).map_err(|e| e.to_string())?;
    for (d, g) in graphs.iter().enumerate() {
        let mut adj = vec![Vec::new(); g.n_nodes];
        for e in &g.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; g.n_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(format!("dims {dims:?}: mode {d} graph is disconnected"));
        }
    }
    Ok(())
}

pub type Check = fn(u64) -> Result<(), String>;

pub const PROPERTIES: [(&str, Check); 7] = [
    ("adjoint identity", check_adjoint),
    ("Kronecker identity", check_kronecker_identity),
    ("projection feasibility", check_projection),
    ("Lloyd monotonicity", check_lloyd_monotone),
    ("HOOI monotonicity", check_hooi_monotone),
    ("weight normalization sums", check_weight_sums),
    ("graph connectivity", check_connectivity),
];
