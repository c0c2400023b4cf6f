use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Column-wise `(x - mean) / std` with population std; constant columns get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StandardScaler<F: Scalar> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Scalar> StandardScaler<F> {
    pub fn fit(x: &DenseMatrix<F>) -> Self {
        let n = F::of_usize(x.nrows().max(1));
        let d = x.ncols();
        let mut mean = vec![F::zero(); d];
        for r in 0..x.nrows() {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![F::zero(); d];
        for r in 0..x.nrows() {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > F::epsilon() {
                    sd
                } else {
                    F::one()
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn fit_vec(y: &[F]) -> Self {
        Self::fit(&DenseMatrix::from_row_major(y.len(), 1, y.to_vec()))
    }

    pub fn transform(&self, x: &DenseMatrix<F>) -> DenseMatrix<F> {
        let mut out = x.clone();
        for r in 0..out.nrows() {
            self.transform_row(out.row_mut(r));
        }
        out
    }

    pub fn transform_row(&self, row: &mut [F]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn inverse_scalar(&self, v: F) -> F {
        v * self.scale[0] + self.mean[0]
    }

    pub fn forward_scalar(&self, v: F) -> F {
        (v - self.mean[0]) / self.scale[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        let s = StandardScaler::fit(&x);
        let t = s.transform(&x);
        assert_eq!(t.row(0), &[-1.0, 0.0]);
        assert_eq!(t.row(1), &[1.0, 0.0]);
        assert_eq!(s.inverse_scalar(s.forward_scalar(3.5)), 3.5);
    }
}
