use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{targets_and_weights, weighted_mean, Presorted, Tree, TreeParams};
use super::{split_seed, ModelError, ModelSpec, Targets};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Bagged CART trees (bootstrap multiplicities act as row weights); the prediction is the mean over trees (a probability
/// for classification).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Forest<F: Scalar> {
    pub trees: Vec<Tree<F>>,
}

impl<F: Scalar> Forest<F> {
    pub const DEFAULT_TREES: usize = 100;

    pub(crate) fn fit(
        spec: &ModelSpec,
        x: &DenseMatrix<F>,
        y: Targets<'_, F>,
    ) -> Result<Self, ModelError> {
        let (t, w, criterion) = targets_and_weights(spec, y);
        let n_trees = spec.hp_count("n_trees", Self::DEFAULT_TREES, 1)?;
        let d = x.ncols();
        let default_m = ((d as f64).sqrt().round() as usize).max(1);
        let mut params = TreeParams::new(criterion);
        params.max_depth = spec.hp_count("max_depth", params.max_depth, 1)?;
        params.min_samples_leaf = spec.hp_count("min_samples_leaf", params.min_samples_leaf, 1)?;
        params.max_features = Some(spec.hp_count("max_features", default_m, 1)?.min(d));
        let n = x.nrows();
        let presorted = Presorted::new(x);
        let mut counts = vec![0usize; n];
        let mut bw = vec![F::zero(); n];
        let trees = (0..n_trees)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(split_seed(spec.seed, i as u64));
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1;
                }
                let rows: Vec<usize> = (0..n).filter(|&r| counts[r] > 0).collect();
                for r in 0..n {
                    bw[r] = w[r] * F::of_usize(counts[r]);
                }
                let leaf = |rows: &[usize]| weighted_mean(&t, &bw, rows);
                Tree::build(x, &t, &bw, &rows, &presorted, params, Some(&mut rng), &leaf)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn predict(&self, x: &DenseMatrix<F>) -> Vec<F> {
        let k = F::of_usize(self.trees.len());
        (0..x.nrows())
            .map(|r| {
                let row = x.row(r);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<F>() / k
            })
            .collect()
    }
}
