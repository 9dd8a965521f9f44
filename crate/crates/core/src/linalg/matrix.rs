use std::fmt;
use std::ops::{Index, IndexMut};

use super::kernel::{self, Lhs};
use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// This is the carrier for iterates `x` (d x r), gradients, Gram matrices and
/// data. Shape-changing operations return `Result` and report mismatches
/// instead of panicking.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps row-major `data`. Fails if the length is wrong or any entry is not finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadLength { op: "DenseMatrix::new", rows, cols, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "DenseMatrix::new" });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::BadLength { op: "DenseMatrix::from_rows", rows: rows.len(), cols, len: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// `rows x cols` matrix with ones on the main diagonal (the first columns of the identity).
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.data[i * cols + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column_vector(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self { rows: self.cols, cols: self.rows, data: out }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch { op, left: self.shape(), right: other.shape() });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, "add_scaled", |a, b| a + s * b)
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    /// Multiplies column `j` by `weights[j]`, i.e. `self * diag(weights)`.
    pub fn scale_columns(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.cols {
            return Err(Error::DimensionMismatch { op: "scale_columns", left: self.shape(), right: (weights.len(), weights.len()) });
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols.max(1)) {
            for (v, &w) in row.iter_mut().zip(weights) {
                *v *= w;
            }
        }
        Ok(out)
    }

    /// Adds `s` to every diagonal entry.
    pub fn add_diagonal(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out.data[i * self.cols + i] += s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Largest `|a_ij - a_ji|`; `None` if not square.
    pub fn asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        Some(worst)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(12) {
            let row = self.row(i);
            let shown: Vec<String> = row.iter().take(8).map(|v| format!("{v:>12.5e}")).collect();
            let more = if self.cols > 8 { " ..." } else { "" };
            writeln!(f, "  {}{more}", shown.join(" "))?;
        }
        if self.rows > 12 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

/// Standard product `a * b`. Non-finite results are reported as errors.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch { op: "matmul", left: a.shape(), right: b.shape() });
    }
    let lhs = Lhs { data: &a.data, rs: a.cols, cs: 1 };
    let out = DenseMatrix::from_vec_unchecked(a.rows, b.cols, kernel::gemm(lhs, &b.data, a.rows, a.cols, b.cols));
    out.ensure_finite("matmul")?;
    Ok(out)
}

/// `a^T * b` without forming the transpose.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch { op: "matmul_tn", left: a.shape(), right: b.shape() });
    }
    let lhs = Lhs { data: &a.data, rs: 1, cs: a.cols };
    let out = DenseMatrix::from_vec_unchecked(a.cols, b.cols, kernel::gemm(lhs, &b.data, a.cols, a.rows, b.cols));
    out.ensure_finite("matmul_tn")?;
    Ok(out)
}

/// Gram matrix `a^T a`, exactly symmetric.
pub fn gram(a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut g = matmul_tn(a, a)?;
    let n = g.rows;
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (g.data[i * n + j] + g.data[j * n + i]);
            g.data[i * n + j] = v;
            g.data[j * n + i] = v;
        }
    }
    Ok(g)
}

/// Symmetric part `(a + a^T) / 2`.
pub fn sym(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare { op: "sym", rows: a.rows, cols: a.cols });
    }
    let n = a.rows;
    Ok(DenseMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i))))
}

/// Skew-symmetric part `(a - a^T) / 2`.
///
/// Computed as `a - sym(a)` so that `sym(a) + skew(a)` reproduces `a` bit for bit.
pub fn skew(a: &DenseMatrix) -> Result<DenseMatrix> {
    let s = sym(a)?;
    a.sub(&s)
}

/// Frobenius inner product `Tr(a b^T)`.
pub fn inner(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    a.check_same_shape(b, "inner")?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Frobenius norm, computed with scaling so tiny and huge entries do not under/overflow.
pub fn fro_norm(a: &DenseMatrix) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.data.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().map(|v| v * v).sum();
    for c in chunks {
        for (s, v) in acc.iter_mut().zip(c) {
            *s += v * v;
        }
    }
    let ss = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    // plain sum is accurate unless squares overflowed or underflowed
    if ss.is_finite() && ss > 1e-280 {
        return ss.sqrt();
    }
    let scale = a.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let inv = 1.0 / scale;
    let ss: f64 = a.data.iter().map(|v| (v * inv) * (v * inv)).sum();
    scale * ss.sqrt()
}
