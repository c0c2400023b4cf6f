use serde::{Deserialize, Serialize};

use crate::linalg::{ldlt_in_place, ldlt_solve, dot, DenseMatrix};
use crate::scalar::Scalar;

/// Relative ridge added to the normal equations when they are numerically singular.
pub const RIDGE_DAMPING: f64 = 1e-8;

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LinearModel<F: Scalar> {
    pub intercept: F,
    pub coefficients: Vec<F>,
    /// Whether ridge damping was needed.
    pub damped: bool,
}

impl<F: Scalar> LinearModel<F> {
    /// Solves the centered normal equations by an LDLᵀ factorization.
    pub fn fit(x: &DenseMatrix<F>, y: &[F]) -> Self {
        let (n, d) = (x.nrows(), x.ncols());
        let nf = F::of_usize(n);
        let x_mean: Vec<F> = (0..d)
            .map(|c| (0..n).map(|r| x.get(r, c)).sum::<F>() / nf)
            .collect();
        let y_mean = y.iter().copied().sum::<F>() / nf;
        let mut a = vec![F::zero(); d * d];
        let mut b = vec![F::zero(); d];
        let mut xc = vec![F::zero(); d];
        for r in 0..n {
            for ((c, &v), &m) in xc.iter_mut().zip(x.row(r)).zip(&x_mean) {
                *c = v - m;
            }
            let yc = y[r] - y_mean;
            for i in 0..d {
                b[i] += xc[i] * yc;
                for j in 0..=i {
                    a[i * d + j] += xc[i] * xc[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                a[j * d + i] = a[i * d + j];
            }
        }
        let mut damped = false;
        let mut l = a.clone();
        let coefficients = if d == 0 {
            Vec::new()
        } else if ldlt_in_place(&mut l, d).is_ok() {
            ldlt_solve(&l, d, &b)
        } else {
            damped = true;
            let max_diag = (0..d).map(|i| a[i * d + i]).fold(F::zero(), F::max);
            let lambda = F::of(RIDGE_DAMPING) * max_diag.max(F::one());
            let mut l = a;
            for i in 0..d {
                l[i * d + i] += lambda;
            }
            match ldlt_in_place(&mut l, d) {
                Ok(()) => ldlt_solve(&l, d, &b),
                Err(_) => vec![F::zero(); d],
            }
        };
        let intercept = y_mean - dot(&coefficients, &x_mean);
        Self {
            intercept,
            coefficients,
            damped,
        }
    }

    pub fn predict(&self, x: &DenseMatrix<F>) -> Vec<F> {
        (0..x.nrows())
            .map(|r| self.intercept + dot(&self.coefficients, x.row(r)))
            .collect()
    }
}
