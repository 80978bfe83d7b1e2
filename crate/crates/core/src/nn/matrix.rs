//! Dense row-major f64 matrix, the only tensor type the engine needs.

use serde::{Deserialize, Serialize};

use super::NnError;

/// A rows x cols matrix of f64 stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from row-major data; length must equal rows*cols.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// self += other, shapes must match.
    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn require_shape(&self, rows: usize, cols: usize, what: &str) -> Result<(), NnError> {
        if self.rows != rows || self.cols != cols {
            return Err(NnError::ShapeMismatch(format!(
                "{what}: expected {rows}x{cols}, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// y += x . w  where x is a row vector (len = w.rows) and y has len = w.cols.
/// Processes four weight rows per pass to keep the accumulator traffic low.
#[inline]
pub(crate) fn addmv(y: &mut [f64], x: &[f64], w: &Matrix) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(y.len(), w.cols);
    let cols = w.cols;
    let mut i = 0;
    while i + 4 <= x.len() {
        let (x0, x1, x2, x3) = (x[i], x[i + 1], x[i + 2], x[i + 3]);
        if x0 != 0.0 || x1 != 0.0 || x2 != 0.0 || x3 != 0.0 {
            let base = i * cols;
            let w0 = &w.data[base..base + cols];
            let w1 = &w.data[base + cols..base + 2 * cols];
            let w2 = &w.data[base + 2 * cols..base + 3 * cols];
            let w3 = &w.data[base + 3 * cols..base + 4 * cols];
            for j in 0..cols {
                y[j] += x0 * w0[j] + x1 * w1[j] + x2 * w2[j] + x3 * w3[j];
            }
        }
        i += 4;
    }
    while i < x.len() {
        let xi = x[i];
        if xi != 0.0 {
            let wr = w.row(i);
            for (yj, wij) in y.iter_mut().zip(wr) {
                *yj += xi * wij;
            }
        }
        i += 1;
    }
}

/// dw += a^T . dz  (outer product of two row vectors).
#[inline]
pub(crate) fn add_outer(dw: &mut Matrix, a: &[f64], dz: &[f64]) {
    debug_assert_eq!(a.len(), dw.rows);
    debug_assert_eq!(dz.len(), dw.cols);
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = dw.row_mut(i);
        for (dwj, dzj) in row.iter_mut().zip(dz) {
            *dwj += ai * dzj;
        }
    }
}

/// da[i] = sum_j dz[j] * w[i][j]  (multiply by w transposed).
#[inline]
pub(crate) fn mv_transposed(da: &mut [f64], dz: &[f64], w: &Matrix) {
    debug_assert_eq!(da.len(), w.rows);
    debug_assert_eq!(dz.len(), w.cols);
    for (i, dai) in da.iter_mut().enumerate() {
        let row = w.row(i);
        let mut acc = 0.0;
        for (wij, dzj) in row.iter().zip(dz) {
            acc += wij * dzj;
        }
        *dai = acc;
    }
}
