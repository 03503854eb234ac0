//! Row-major dense matrix used for data chunks, sketches and models.

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix. Every constructor rejects non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer. Fails if the length is not `rows * cols` or
    /// any entry is NaN or infinite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::mismatch("matrix buffer length", rows * cols, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::mismatch("row width", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    /// Internal constructor for buffers produced by arithmetic on finite inputs.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let width = self.cols.max(1);
        let n = if self.cols == 0 { 0 } else { self.rows };
        self.data.chunks_exact(width).take(n)
    }

    /// Copies rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start <= end && end <= self.rows, "row range out of bounds");
        Self::from_parts(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Selects the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_parts(idx.len(), self.cols, data)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_parts(self.cols, self.rows, out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::mismatch("matmul inner dimension", self.cols, other.rows));
        }
        let (n, k, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let out_row = &mut out[i * p..(i + 1) * p];
            for t in 0..k {
                let a = self.data[i * k + t];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(t)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_parts(n, p, out))
    }

    /// `selfᵀ · self`, the `cols × cols` Gram matrix, accumulated row by row.
    pub fn gram(&self) -> DenseMatrix {
        let d = self.cols;
        let mut g = vec![0.0; d * d];
        for r in self.row_iter() {
            accumulate_outer(&mut g, r, 1.0);
        }
        mirror_upper(&mut g, d);
        Self::from_parts(d, d, g)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch(
                "elementwise shape",
                self.rows * self.cols,
                other.rows * other.cols,
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        Self::from_parts(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    /// Mean of the rows, a vector of length `cols`.
    pub fn row_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Subtracts `v` from every row.
    pub fn sub_row_vector(&self, v: &[f64]) -> Result<DenseMatrix> {
        if v.len() != self.cols {
            return Err(Error::mismatch("row vector length", self.cols, v.len()));
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            for (x, c) in out.row_mut(i).iter_mut().zip(v) {
                *x -= c;
            }
        }
        Ok(out)
    }

    /// Stacks matrices vertically. All inputs must share a column count.
    pub fn vstack(parts: &[&DenseMatrix]) -> Result<DenseMatrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::with_capacity(parts.iter().map(|m| m.data.len()).sum());
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::mismatch("vstack column count", cols, m.cols));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Self::from_parts(rows, cols, data))
    }

    /// Splits into consecutive row blocks of at most `size` rows.
    pub fn row_chunks(&self, size: usize) -> Vec<DenseMatrix> {
        assert!(size > 0, "chunk size must be positive");
        (0..self.rows)
            .step_by(size)
            .map(|s| self.slice_rows(s, (s + size).min(self.rows)))
            .collect()
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> DenseMatrix {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self::from_parts(rows, cols, data)
    }
}

impl AsRef<DenseMatrix> for DenseMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        self
    }
}

/// Adds `w · r rᵀ` to the upper triangle of the row-major `d × d` buffer `g`.
pub(crate) fn accumulate_outer(g: &mut [f64], r: &[f64], w: f64) {
    let d = r.len();
    for (i, &ri) in r.iter().enumerate() {
        if ri == 0.0 {
            continue;
        }
        let a = w * ri;
        let row = &mut g[i * d + i..(i + 1) * d];
        for (o, &rj) in row.iter_mut().zip(&r[i..]) {
            *o += a * rj;
        }
    }
}

/// Copies the upper triangle into the lower one.
pub(crate) fn mirror_upper(g: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..i {
            g[i * d + j] = g[j * d + i];
        }
    }
}
