//! Tucker (HOSVD-initialized HOOI) and CP (ALS) decompositions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CocoError, Result};
use crate::tensor::{increment, DenseTensor};

#[derive(Debug, Clone)]
pub struct TuckerModel {
    pub core: DenseTensor,
    /// `n_d x R_d`, orthonormal columns.
    pub factors: Vec<DMatrix<f64>>,
    /// Relative fit `1 - ||T - reconstruct|| / ||T||` after each sweep; entry 0
    /// is the HOSVD initializer.
    pub fit_history: Vec<f64>,
}

impl TuckerModel {
    pub fn reconstruct(&self) -> DenseTensor {
        let mut t = self.core.clone();
        for (d, a) in self.factors.iter().enumerate() {
            t = t.mode_product(d, a).expect("factor shapes are consistent");
        }
        t
    }

    pub fn fit(&self) -> f64 {
        *self.fit_history.last().expect("at least the initializer")
    }
}

#[derive(Debug, Clone)]
pub struct CpModel {
    pub rank: usize,
    /// `n_d x R`, unit-norm columns whose first nonzero entry is positive.
    pub factors: Vec<DMatrix<f64>>,
    /// Component magnitudes; signs absorbed from the factor normalization.
    pub weights: Vec<f64>,
    /// `||T - reconstruct||_F` after each sweep.
    pub error_history: Vec<f64>,
    pub fit: f64,
}

impl CpModel {
    pub fn reconstruct(&self) -> DenseTensor {
        let dims: Vec<usize> = self.factors.iter().map(|a| a.nrows()).collect();
        cp_reconstruct(&dims, &self.factors, Some(&self.weights))
    }
}

/// Tucker rank heuristic: `max(1, floor(sqrt(n_d) / 2))`.
pub fn heuristic_rank(n_d: usize) -> usize {
    (((n_d as f64).sqrt() / 2.0).floor() as usize).max(1)
}

/// Gram matrix of the mode-d matricization, `T_(d) T_(d)^T`.
fn mode_gram(t: &DenseTensor, mode: usize) -> DMatrix<f64> {
    let nd = t.dims()[mode];
    let rows: Vec<Vec<f64>> = (0..nd).map(|i| t.subarray(mode, i)).collect();
    let mut g = DMatrix::zeros(nd, nd);
    for i in 0..nd {
        for j in i..nd {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Leading `r` eigenvectors of a symmetric matrix, by decreasing eigenvalue.
fn leading_eigenvectors(g: DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let n = g.nrows();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out = DMatrix::zeros(n, r);
    for (k, &c) in order.iter().take(r).enumerate() {
        let mut col = eig.eigenvectors.column(c).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        out.set_column(k, &col);
    }
    out
}

fn project_all_but(t: &DenseTensor, factors: &[DMatrix<f64>], skip: Option<usize>) -> DenseTensor {
    let mut y = t.clone();
    for (d, a) in factors.iter().enumerate() {
        if Some(d) != skip {
            y = y
                .mode_product(d, &a.transpose())
                .expect("factor shapes are consistent");
        }
    }
    y
}

fn relative_fit(t: &DenseTensor, approx: &DenseTensor, norm: f64) -> f64 {
    if norm == 0.0 {
        return 1.0;
    }
    1.0 - t.distance(approx).expect("same dims") / norm
}

/// Truncated higher-order SVD.
pub fn hosvd(t: &DenseTensor, ranks: &[usize]) -> Result<TuckerModel> {
    check_ranks(t, ranks)?;
    let factors: Vec<DMatrix<f64>> = (0..t.order())
        .map(|d| leading_eigenvectors(mode_gram(t, d), ranks[d]))
        .collect();
    let core = project_all_but(t, &factors, None);
    let mut model = TuckerModel {
        core,
        factors,
        fit_history: Vec::new(),
    };
    let fit = relative_fit(t, &model.reconstruct(), t.frobenius_norm());
    model.fit_history.push(fit);
    Ok(model)
}

fn check_ranks(t: &DenseTensor, ranks: &[usize]) -> Result<()> {
    if ranks.len() != t.order() {
        return Err(CocoError::DimensionMismatch(format!(
            "{} ranks for a {}-way tensor",
            ranks.len(),
            t.order()
        )));
    }
    for (d, (&r, &n)) in ranks.iter().zip(t.dims()).enumerate() {
        if r == 0 || r > n {
            return Err(CocoError::RankOutOfRange {
                mode: d,
                rank: r,
                len: n,
            });
        }
    }
    Ok(())
}

/// Higher-order orthogonal iteration from the HOSVD initializer. Stops when the
/// relative fit improves by less than `tol` or after `max_sweeps`.
pub fn tucker_hooi(
    t: &DenseTensor,
    ranks: &[usize],
    max_sweeps: usize,
    tol: f64,
) -> Result<TuckerModel> {
    let mut model = hosvd(t, ranks)?;
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(model);
    }
    for _ in 0..max_sweeps {
        for (d, &r) in ranks.iter().enumerate() {
            let y = project_all_but(t, &model.factors, Some(d));
            model.factors[d] = leading_eigenvectors(mode_gram(&y, d), r);
        }
        model.core = project_all_but(t, &model.factors, None);
        let fit = relative_fit(t, &model.reconstruct(), norm);
        let prev = model.fit();
        model.fit_history.push(fit);
        if fit - prev < tol {
            break;
        }
    }
    Ok(model)
}

/// Low-rank denoising with the heuristic per-mode Tucker rank.
pub fn tucker_denoise(t: &DenseTensor) -> Result<DenseTensor> {
    let ranks: Vec<usize> = t.dims().iter().map(|&n| heuristic_rank(n)).collect();
    Ok(tucker_hooi(t, &ranks, 50, 1e-8)?.reconstruct())
}

fn cp_reconstruct(
    dims: &[usize],
    factors: &[DMatrix<f64>],
    weights: Option<&[f64]>,
) -> DenseTensor {
    let rank = factors[0].ncols();
    let mut idx = vec![0usize; dims.len()];
    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = 0.0;
        for r in 0..rank {
            let mut p = weights.map_or(1.0, |w| w[r]);
            for (d, a) in factors.iter().enumerate() {
                p *= a[(idx[d], r)];
            }
            v += p;
        }
        data.push(v);
        increment(&mut idx, dims);
    }
    DenseTensor::new(dims.to_vec(), data).expect("dims are valid")
}

/// Matricized tensor times Khatri-Rao product of all factors except `mode`.
fn mttkrp(t: &DenseTensor, factors: &[DMatrix<f64>], mode: usize) -> DMatrix<f64> {
    let dims = t.dims();
    let rank = factors[0].ncols();
    let mut out = DMatrix::zeros(dims[mode], rank);
    let mut idx = vec![0usize; dims.len()];
    let mut prod = vec![0.0; rank];
    for &x in t.vectorize() {
        if x != 0.0 {
            prod.iter_mut().for_each(|p| *p = x);
            for (d, a) in factors.iter().enumerate() {
                if d != mode {
                    for (r, p) in prod.iter_mut().enumerate() {
                        *p *= a[(idx[d], r)];
                    }
                }
            }
            for (r, p) in prod.iter().enumerate() {
                out[(idx[mode], r)] += p;
            }
        }
        increment(&mut idx, dims);
    }
    out
}

const CP_RIDGE: f64 = 1e-12;

/// Rank-`rank` CP decomposition by alternating least squares.
pub fn cp_als(
    t: &DenseTensor,
    rank: usize,
    max_sweeps: usize,
    tol: f64,
    seed: u64,
) -> Result<CpModel> {
    if rank == 0 {
        return Err(CocoError::param("rank", "CP rank must be at least 1"));
    }
    let dims = t.dims().to_vec();
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(CpModel {
            rank,
            factors: dims.iter().map(|&n| DMatrix::zeros(n, rank)).collect(),
            weights: vec![0.0; rank],
            error_history: vec![0.0],
            fit: 1.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factors: Vec<DMatrix<f64>> = dims
        .iter()
        .map(|&n| {
            let g = DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng));
            if rank <= n {
                g.qr().q()
            } else {
                normalize_columns(g).0
            }
        })
        .collect();

    let mut error_history = Vec::new();
    for _ in 0..max_sweeps {
        for d in 0..dims.len() {
            let mut v = DMatrix::from_element(rank, rank, 1.0);
            for (j, a) in factors.iter().enumerate() {
                if j != d {
                    v.component_mul_assign(&(a.transpose() * a));
                }
            }
            for r in 0..rank {
                v[(r, r)] += CP_RIDGE;
            }
            let m = mttkrp(t, &factors, d);
            // A_d = M V^{-1}, i.e. V A_d^T = M^T
            let sol = match v.clone().cholesky() {
                Some(ch) => ch.solve(&m.transpose()),
                None => v
                    .lu()
                    .solve(&m.transpose())
                    .unwrap_or_else(|| DMatrix::zeros(rank, dims[d])),
            };
            factors[d] = sol.transpose();
        }
        let err = t
            .distance(&cp_reconstruct(&dims, &factors, None))
            .expect("same dims");
        let done = error_history
            .last()
            .is_some_and(|&prev: &f64| (prev - err).abs() < tol * norm);
        error_history.push(err);
        if done || err <= tol * norm {
            break;
        }
    }

    let mut weights = vec![1.0; rank];
    for a in factors.iter_mut() {
        let (unit, norms) = normalize_columns(a.clone());
        *a = unit;
        for (r, w) in weights.iter_mut().enumerate() {
            *w *= norms[r];
            let col = a.column(r);
            if let Some(first) = col.iter().find(|v| **v != 0.0) {
                if *first < 0.0 {
                    a.column_mut(r).neg_mut();
                    *w = -*w;
                }
            }
        }
    }
    let err = *error_history.last().unwrap_or(&norm);
    Ok(CpModel {
        rank,
        factors,
        weights,
        error_history,
        fit: 1.0 - err / norm,
    })
}

fn normalize_columns(mut a: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut norms = Vec::with_capacity(a.ncols());
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
        norms.push(n);
    }
    (a, norms)
}
