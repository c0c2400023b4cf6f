use serde::{Deserialize, Serialize};

use super::scaler::StandardScaler;
use super::{class_weights, ModelError, ModelSpec};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// k-nearest-neighbour classifier on standardized features.
///
/// Distance ties go to the lower training row; vote ties go to the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Knn<F: Scalar> {
    pub k: usize,
    pub scaler: StandardScaler<F>,
    pub points: DenseMatrix<F>,
    pub labels: Vec<bool>,
    pub weights: Vec<F>,
}

impl<F: Scalar> Knn<F> {
    pub const DEFAULT_K: usize = 5;

    pub(crate) fn fit(spec: &ModelSpec, x: &DenseMatrix<F>, y: &[bool]) -> Result<Self, ModelError> {
        let k = spec.hp_count("k", Self::DEFAULT_K, 1)?.min(x.nrows());
        let scaler = StandardScaler::fit(x);
        Ok(Self {
            k,
            points: scaler.transform(x),
            scaler,
            labels: y.to_vec(),
            weights: class_weights(y, spec.balanced()),
        })
    }

    /// Weighted positive and negative vote mass per query row.
    fn votes(&self, x: &DenseMatrix<F>) -> Vec<(F, F)> {
        let n = self.points.nrows();
        let mut q = vec![F::zero(); x.ncols()];
        let mut dist: Vec<(F, usize)> = Vec::with_capacity(n);
        (0..x.nrows())
            .map(|r| {
                q.copy_from_slice(x.row(r));
                self.scaler.transform_row(&mut q);
                dist.clear();
                dist.extend((0..n).map(|i| {
                    let d = self
                        .points
                        .row(i)
                        .iter()
                        .zip(&q)
                        .fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                    (d, i)
                }));
                let cmp = |a: &(F, usize), b: &(F, usize)| a.0.total_order(&b.0).then(a.1.cmp(&b.1));
                if self.k < n {
                    dist.select_nth_unstable_by(self.k - 1, cmp);
                }
                dist[..self.k].iter().fold((F::zero(), F::zero()), |(p, m), &(_, i)| {
                    if self.labels[i] {
                        (p + self.weights[i], m)
                    } else {
                        (p, m + self.weights[i])
                    }
                })
            })
            .collect()
    }

    pub fn predict_labels(&self, x: &DenseMatrix<F>) -> Vec<bool> {
        self.votes(x).into_iter().map(|(p, m)| p >= m).collect()
    }

    /// Weighted share of positive neighbours.
    pub fn predict_scores(&self, x: &DenseMatrix<F>) -> Vec<F> {
        self.votes(x)
            .into_iter()
            .map(|(p, m)| if p + m > F::zero() { p / (p + m) } else { F::zero() })
            .collect()
    }
}
