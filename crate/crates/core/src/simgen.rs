//! Synthetic data: checkerbox mean models with optional imbalance and
//! heteroskedastic noise, and symmetric rank-2 CP models whose factor rows
//! trace two non-convex shapes.

use nalgebra::{Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::tensor::{increment, DenseTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockMeans {
    /// iid `N(0, separation^2)`, redrawn until every pair of block means is at
    /// least `separation / 2` apart.
    Sample { separation: f64 },
    /// Explicit `k_1 x ... x k_D` means, flat in mode-1 order.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    Global {
        sigma: f64,
    },
    /// One standard deviation per block, flat in mode-1 order.
    PerBlock(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerboxSpec {
    pub dims: Vec<usize>,
    pub clusters: Vec<usize>,
    /// Per-mode cluster size fractions; `None` means balanced.
    pub fractions: Option<Vec<Vec<f64>>>,
    pub block_means: BlockMeans,
    pub noise: Noise,
    pub shuffle: bool,
    pub seed: u64,
}

pub const DEFAULT_SEPARATION: f64 = 6.0;

impl CheckerboxSpec {
    /// Balanced clusters, sampled block means, homoskedastic noise.
    pub fn balanced(dims: &[usize], clusters: &[usize], sigma: f64, seed: u64) -> Self {
        Self {
            dims: dims.to_vec(),
            clusters: clusters.to_vec(),
            fractions: None,
            block_means: BlockMeans::Sample {
                separation: DEFAULT_SEPARATION,
            },
            noise: Noise::Global { sigma },
            shuffle: false,
            seed,
        }
    }

    /// Two clusters per mode with the second holding `fraction` of each mode.
    pub fn imbalanced(dims: &[usize], fraction: f64, sigma: f64, seed: u64) -> Self {
        let mut s = Self::balanced(dims, &vec![2; dims.len()], sigma, seed);
        s.fractions = Some(vec![vec![1.0 - fraction, fraction]; dims.len()]);
        s
    }

    pub fn block_count(&self) -> usize {
        self.clusters.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub u_star: DenseTensor,
    /// Cluster label of every subarray, per mode.
    pub labels: Vec<Vec<usize>>,
    /// `k_1 x ... x k_D` co-cluster means.
    pub block_means: DenseTensor,
    /// Slice permutation applied per mode (identity when not shuffled):
    /// position `i` holds original slice `permutation[d][i]`.
    pub permutations: Vec<Vec<usize>>,
}

/// Cluster sizes from fractions by largest remainder; every size must be >= 1.
pub fn cluster_sizes(n: usize, fractions: &[f64], mode: usize) -> Result<Vec<usize>> {
    let field = format!("fractions[{mode}]");
    if fractions.is_empty() {
        return Err(CocoError::param(&field, "no clusters"));
    }
    if fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(CocoError::param(&field, "fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CocoError::param(
            &field,
            format!("fractions sum to {total}, not 1"),
        ));
    }
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| (r + 1e-9).floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - sizes[a] as f64;
        let rb = raw[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    if sizes.contains(&0) {
        return Err(CocoError::param(
            &field,
            format!("fractions {fractions:?} leave an empty cluster for n = {n}"),
        ));
    }
    Ok(sizes)
}

fn sample_block_means(m: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(separation > 0.0) {
        return Err(CocoError::param("separation", "must be positive"));
    }
    let normal = Normal::new(0.0, separation).expect("positive sd");
    let gap = separation / 2.0;
    let ok = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[1] - w[0] >= gap)
    };
    for _ in 0..10_000 {
        let v: Vec<f64> = (0..m).map(|_| normal.sample(rng)).collect();
        if ok(&v) {
            return Ok(v);
        }
    }
    // Too many blocks for rejection to succeed: keep a draw's ordering and
    // push sorted neighbours apart to the minimum gap, then recenter.
    let v: Vec<f64> = (0..m).map(|_| normal.sample(rng)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = v.clone();
    for w in 1..m {
        let (prev, cur) = (order[w - 1], order[w]);
        if out[cur] - out[prev] < gap {
            out[cur] = out[prev] + gap;
        }
    }
    let mean = out.iter().sum::<f64>() / m as f64;
    out.iter_mut().for_each(|x| *x -= mean);
    Ok(out)
}

fn block_offset(labels: &[Vec<usize>], idx: &[usize], clusters: &[usize]) -> usize {
    let mut off = 0;
    let mut stride = 1;
    for d in 0..idx.len() {
        off += labels[d][idx[d]] * stride;
        stride *= clusters[d];
    }
    off
}

/// Expands co-cluster means through per-mode labels, `C x_1 M_1 ... x_D M_D`.
pub fn expand_blocks(means: &DenseTensor, labels: &[Vec<usize>]) -> Result<DenseTensor> {
    let dims: Vec<usize> = labels.iter().map(Vec::len).collect();
    let clusters = means.dims().to_vec();
    if clusters.len() != dims.len() {
        return Err(CocoError::DimensionMismatch(
            "labels vs block means order".into(),
        ));
    }
    for (l, &k) in labels.iter().zip(&clusters) {
        if l.iter().any(|&c| c >= k) {
            return Err(CocoError::DimensionMismatch(
                "label exceeds cluster count".into(),
            ));
        }
    }
    let mut idx = vec![0usize; dims.len()];
    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(means.vectorize()[block_offset(labels, &idx, &clusters)]);
        increment(&mut idx, &dims);
    }
    DenseTensor::new(dims, data)
}

/// Checkerbox data `X = U* + E` with contiguous (optionally shuffled) blocks.
pub fn gen_checkerbox(spec: &CheckerboxSpec) -> Result<(DenseTensor, GroundTruth)> {
    let order = spec.dims.len();
    if spec.clusters.len() != order {
        return Err(CocoError::param(
            "clusters",
            format!("need {order} entries"),
        ));
    }
    for (d, (&k, &n)) in spec.clusters.iter().zip(&spec.dims).enumerate() {
        if k == 0 || k > n {
            return Err(CocoError::param(
                &format!("clusters[{d}]"),
                format!("{k} clusters for {n} subarrays"),
            ));
        }
    }
    if spec.dims.contains(&0) {
        return Err(CocoError::param("dims", "every mode needs length >= 1"));
    }
    let m = spec.block_count();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let sizes: Vec<Vec<usize>> = (0..order)
        .map(|d| match &spec.fractions {
            Some(f) => {
                let fd = f.get(d).ok_or_else(|| {
                    CocoError::param("fractions", format!("missing fractions for mode {d}"))
                })?;
                if fd.len() != spec.clusters[d] {
                    return Err(CocoError::param(
                        &format!("fractions[{d}]"),
                        format!("{} fractions for {} clusters", fd.len(), spec.clusters[d]),
                    ));
                }
                cluster_sizes(spec.dims[d], fd, d)
            }
            None => cluster_sizes(
                spec.dims[d],
                &vec![1.0 / spec.clusters[d] as f64; spec.clusters[d]],
                d,
            ),
        })
        .collect::<Result<_>>()?;

    let means = match &spec.block_means {
        BlockMeans::Sample { separation } => sample_block_means(m, *separation, &mut rng)?,
        BlockMeans::Explicit(v) => {
            if v.len() != m {
                return Err(CocoError::param(
                    "block_means",
                    format!("need {m} values, got {}", v.len()),
                ));
            }
            v.clone()
        }
    };
    let sigmas = match &spec.noise {
        Noise::Global { sigma } => vec![*sigma; m],
        Noise::PerBlock(s) => {
            if s.len() != m {
                return Err(CocoError::param(
                    "noise",
                    format!("need {m} block sigmas, got {}", s.len()),
                ));
            }
            s.clone()
        }
    };
    if sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(CocoError::param(
            "sigma",
            "noise standard deviation must be >= 0",
        ));
    }

    let mut labels: Vec<Vec<usize>> = sizes
        .iter()
        .map(|sz| {
            sz.iter()
                .enumerate()
                .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
                .collect()
        })
        .collect();
    let mut permutations: Vec<Vec<usize>> = spec.dims.iter().map(|&n| (0..n).collect()).collect();
    if spec.shuffle {
        for (perm, lab) in permutations.iter_mut().zip(labels.iter_mut()) {
            perm.shuffle(&mut rng);
            *lab = perm.iter().map(|&p| lab[p]).collect();
        }
    }

    let block_means = DenseTensor::new(spec.clusters.clone(), means)?;
    let u_star = expand_blocks(&block_means, &labels)?;
    let mut idx = vec![0usize; order];
    let data: Vec<f64> = u_star
        .vectorize()
        .iter()
        .map(|&mu| {
            let s = sigmas[block_offset(&labels, &idx, &spec.clusters)];
            increment(&mut idx, &spec.dims);
            let z: f64 = StandardNormal.sample(&mut rng);
            mu + s * z
        })
        .collect();
    let x = DenseTensor::new(spec.dims.clone(), data)?;
    Ok((
        x,
        GroundTruth {
            u_star,
            labels,
            block_means,
            permutations,
        },
    ))
}

/// Two-class heteroskedastic checkerbox: blocks whose mode-1 cluster index is
/// odd have standard deviation `ratio * sigma1`, the rest `sigma1`.
pub fn gen_heteroskedastic(
    spec: &CheckerboxSpec,
    sigma1: f64,
    ratio: f64,
) -> Result<(DenseTensor, GroundTruth)> {
    if !(ratio > 0.0) {
        return Err(CocoError::param("ratio", "must be positive"));
    }
    let mut s = spec.clone();
    s.noise = Noise::PerBlock(heteroskedastic_sigmas(&spec.clusters, sigma1, ratio));
    gen_checkerbox(&s)
}

pub fn heteroskedastic_sigmas(clusters: &[usize], sigma1: f64, ratio: f64) -> Vec<f64> {
    let m: usize = clusters.iter().product();
    (0..m)
        .map(|b| {
            let r1 = b % clusters[0];
            if r1 % 2 == 1 {
                sigma1 * ratio
            } else {
                sigma1
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpShape {
    HalfMoons,
    Bullseye,
}

/// `n x 2` factor rows: the first `n / 2` trace shape class 0, the rest class 1.
pub fn shape_factor(shape: CpShape, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let h = n / 2;
    let angle = |k: usize| {
        if h <= 1 {
            0.0
        } else {
            std::f64::consts::PI * k as f64 / (h - 1) as f64
        }
    };
    let rows = match shape {
        CpShape::HalfMoons => {
            let scale = 3.0;
            let mut rows: Vec<[f64; 2]> = (0..h)
                .map(|k| {
                    let t = angle(k);
                    [scale * t.cos(), scale * t.sin()]
                })
                .collect();
            rows.extend((0..h).map(|k| {
                let t = angle(k);
                [scale * (1.0 - t.cos()), scale * (0.5 - t.sin())]
            }));
            rows
        }
        CpShape::Bullseye => {
            let mut rows = Vec::with_capacity(n);
            for radius in [1.0, 3.0] {
                for _ in 0..h {
                    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    rows.push([radius * t.cos(), radius * t.sin()]);
                }
            }
            rows
        }
    };
    whiten(rows)
}

/// Maps the rows so the two factor columns are orthogonal with equal norms,
/// keeping the Frobenius norm. Without this the slice geometry of the CP
/// tensor is stretched along the dominant column.
fn whiten(mut rows: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut g = Matrix2::zeros();
    for r in &rows {
        let v = Vector2::new(r[0], r[1]);
        g += v * v.transpose();
    }
    let eig = g.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return rows;
    }
    let c = (g.trace() / 2.0).sqrt();
    let w = eig.eigenvectors
        * Matrix2::from_diagonal(&eig.eigenvalues.map(|l| c / l.sqrt()))
        * eig.eigenvectors.transpose();
    for r in rows.iter_mut() {
        let v = w * Vector2::new(r[0], r[1]);
        *r = [v[0], v[1]];
    }
    rows
}

/// Symmetric rank-2 CP model `sum_r a_r o a_r o a_r` (3-way, `n` per mode)
/// plus Gaussian noise. Truth labels are the two shape classes on every mode.
pub fn gen_cp_two_shape(
    shape: CpShape,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<(DenseTensor, GroundTruth)> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(CocoError::param("n", "must be even and at least 2"));
    }
    if !(sigma >= 0.0) {
        return Err(CocoError::param("sigma", "must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = shape_factor(shape, n, &mut rng);
    let dims = [n, n, n];
    let u_star = DenseTensor::from_fn(&dims, |ix| {
        (0..2)
            .map(|r| a[ix[0]][r] * a[ix[1]][r] * a[ix[2]][r])
            .sum()
    })?;
    let noisy: Vec<f64> = u_star
        .vectorize()
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    let x = DenseTensor::new(dims.to_vec(), noisy)?;
    let class: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    // block means of U* over the two-class partition
    let labels = vec![class.clone(), class.clone(), class];
    let block_means = crate::clusterpath::co_cluster_means(
        &u_star,
        &labels
            .iter()
            .enumerate()
            .map(|(d, l)| crate::clusterpath::Partition {
                mode: d,
                labels: l.clone(),
            })
            .collect::<Vec<_>>(),
    )?;
    Ok((
        x,
        GroundTruth {
            u_star,
            labels,
            block_means,
            permutations: vec![(0..n).collect(); 3],
        },
    ))
}
