//! Small dense row-major matrix and the factorizations the models need.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DenseMatrix<F: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> DenseMatrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<F> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    /// Rows selected by index, in the given order (duplicates allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// Horizontal concatenation. Row counts must agree.
    pub fn hstack(parts: &[&Self]) -> Self {
        let rows = parts.first().map_or(0, |m| m.rows);
        assert!(parts.iter().all(|m| m.rows == rows), "row count mismatch");
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Self { rows, cols, data }
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G) -> DenseMatrix<G> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<G: Scalar>(&self) -> DenseMatrix<G> {
        self.map(|v| G::of(v.to_f64_lossy()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// In-place Cholesky factorization of a symmetric `n x n` matrix stored row-major.
///
/// On success the lower triangle holds `L` with `A = L Lᵀ`. A pivot below
/// `n * eps * max_diag` counts as a failure so that numerically singular systems
/// are reported rather than producing huge coefficients.
pub fn cholesky_in_place<F: Scalar>(a: &mut [F], n: usize) -> Result<(), NotPositiveDefinite> {
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(F::zero(), F::max);
    let tol = F::of_usize(n.max(1)) * F::epsilon() * max_diag.max(F::min_positive_value());
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tol) {
            return Err(NotPositiveDefinite);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor produced by [`cholesky_in_place`].
pub fn cholesky_solve<F: Scalar>(l: &[F], n: usize, b: &[F]) -> Vec<F> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Square-root-free factorization `A = L D Lᵀ` of a symmetric `n x n` matrix.
///
/// The strict lower triangle receives `L` (unit diagonal implied) and the
/// diagonal receives `D`. Fails under the same pivot rule as [`cholesky_in_place`].
pub fn ldlt_in_place<F: Scalar>(a: &mut [F], n: usize) -> Result<(), NotPositiveDefinite> {
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(F::zero(), F::max);
    let tol = F::of_usize(n.max(1)) * F::epsilon() * max_diag.max(F::min_positive_value());
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k] * a[k * n + k];
        }
        if !(d > tol) {
            return Err(NotPositiveDefinite);
        }
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k] * a[k * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L D Lᵀ x = b` given the factor produced by [`ldlt_in_place`].
pub fn ldlt_solve<F: Scalar>(f: &[F], n: usize, b: &[F]) -> Vec<F> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = f[i * n + k] * y[k];
            y[i] -= t;
        }
    }
    for i in 0..n {
        y[i] /= f[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = f[k * n + i] * y[k];
            y[i] -= t;
        }
    }
    y
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}
