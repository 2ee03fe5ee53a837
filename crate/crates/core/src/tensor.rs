//! Dense D-way tensors stored in mode-1 vectorization order.
//!
//! Element `(i_1, ..., i_D)` (1-based, as in the usual tensor notation) lives
//! at flat offset `(i_1 - 1) + sum_{d >= 2} (i_d - 1) * prod_{j < d} n_j`.
//! The Rust API takes 0-based indices and 0-based mode numbers throughout.

use nalgebra::DMatrix;

use crate::error::{CocoError, Result};

/// Dense D-way array of `f64`, column-major over the mode-1 matricization.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// Mode-d matricization: column `c` is the mode-d fiber obtained by fixing
/// every other index, with the remaining indices ordered lower-mode-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Matricization {
    pub mode: usize,
    pub rows: usize,
    pub cols: usize,
    /// Column-major, `rows * cols` entries.
    pub data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(CocoError::InvalidShape(
            "tensor needs at least one mode".into(),
        ));
    }
    if let Some(d) = dims.iter().position(|&n| n == 0) {
        return Err(CocoError::InvalidShape(format!("mode {d} has length 0")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| CocoError::InvalidShape("element count overflows usize".into()))
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if data.len() != n {
            return Err(CocoError::DimensionMismatch(format!(
                "dims {:?} need {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        })
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `prod_{j != d} n_j`, the length of a mode-d subarray.
    pub fn n_minus(&self, mode: usize) -> usize {
        self.data.len() / self.dims[mode]
    }

    /// The flat vector `vec(T)`; this is the storage itself.
    pub fn vectorize(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Stride of mode `d` in the flat layout, `prod_{j < d} n_j`.
    pub fn stride(&self, mode: usize) -> usize {
        self.dims[..mode].iter().product()
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.dims) {
            debug_assert!(i < n);
            off += i * stride;
            stride *= n;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(CocoError::ModeOutOfRange {
                mode,
                order: self.dims.len(),
            });
        }
        Ok(())
    }

    /// Mode-d subarray `i` flattened in matricization column order
    /// (row `i` of the mode-d matricization).
    pub fn subarray(&self, mode: usize, i: usize) -> Vec<f64> {
        let s = self.stride(mode);
        let nd = self.dims[mode];
        let outer = self.data.len() / (s * nd);
        let mut out = Vec::with_capacity(s * outer);
        for o in 0..outer {
            let base = s * (i + nd * o);
            out.extend_from_slice(&self.data[base..base + s]);
        }
        out
    }

    pub fn matricize(&self, mode: usize) -> Result<Matricization> {
        self.check_mode(mode)?;
        let rows = self.dims[mode];
        let cols = self.n_minus(mode);
        let s = self.stride(mode);
        let mut data = vec![0.0; rows * cols];
        // column c = r + s * o, entry (k, c) <- T[r + s * (k + n_d * o)]
        for c in 0..cols {
            let r = c % s;
            let o = c / s;
            for k in 0..rows {
                data[k + rows * c] = self.data[r + s * (k + rows * o)];
            }
        }
        Ok(Matricization {
            mode,
            rows,
            cols,
            data,
        })
    }

    /// `T x_d B` for a matrix `B` of shape `m x n_d`.
    pub fn mode_product(&self, mode: usize, b: &DMatrix<f64>) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let nd = self.dims[mode];
        if b.ncols() != nd {
            return Err(CocoError::DimensionMismatch(format!(
                "mode-{mode} product needs {nd} columns, matrix has {}",
                b.ncols()
            )));
        }
        let m = b.nrows();
        let s = self.stride(mode);
        let outer = self.data.len() / (s * nd);
        let mut dims = self.dims.clone();
        dims[mode] = m;
        let mut data = vec![0.0; s * m * outer];
        for o in 0..outer {
            for k in 0..nd {
                let src = &self.data[s * (k + nd * o)..s * (k + nd * o) + s];
                for p in 0..m {
                    let coef = b[(p, k)];
                    if coef == 0.0 {
                        continue;
                    }
                    let dst = &mut data[s * (p + m * o)..s * (p + m * o) + s];
                    for (y, &x) in dst.iter_mut().zip(src) {
                        *y += coef * x;
                    }
                }
            }
        }
        DenseTensor::new(dims, data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn grand_mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `||self - other||_F`.
    pub fn distance(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(CocoError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl Matricization {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row + self.rows * col]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    /// Folds the matricization back into a tensor with the given dims.
    pub fn dematricize(&self, dims: &[usize]) -> Result<DenseTensor> {
        let n = check_dims(dims)?;
        if self.mode >= dims.len() || dims[self.mode] != self.rows || n != self.rows * self.cols {
            return Err(CocoError::DimensionMismatch(format!(
                "mode-{} matricization {}x{} does not fold into {:?}",
                self.mode, self.rows, self.cols, dims
            )));
        }
        let rows = self.rows;
        let s: usize = dims[..self.mode].iter().product();
        let mut data = vec![0.0; n];
        for c in 0..self.cols {
            let r = c % s;
            let o = c / s;
            for k in 0..rows {
                data[r + s * (k + rows * o)] = self.data[k + rows * c];
            }
        }
        DenseTensor::new(dims.to_vec(), data)
    }
}

/// Advances a 0-based multi-index in mode-1-fastest order.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}
