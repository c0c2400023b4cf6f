use serde::{Deserialize, Serialize};

use super::tree::{Criterion, Presorted, Tree, TreeParams};
use super::{bool_to_f, class_weights, ModelError, ModelSpec};
use crate::linalg::DenseMatrix;
use crate::scalar::{sigmoid, softplus, Scalar};

/// Boosted regression trees on the logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Gbc<F: Scalar> {
    /// Log-odds of the (weighted) positive base rate.
    pub init: F,
    pub learning_rate: F,
    pub trees: Vec<Tree<F>>,
}

/// Training state between boosting rounds.
#[derive(Debug, Clone)]
pub struct GbcState<F: Scalar> {
    pub model: Gbc<F>,
    pub tree_params: TreeParams,
    pub weights: Vec<F>,
    /// Current additive score per training row.
    pub scores: Vec<F>,
    presorted: Option<Presorted>,
}

impl<F: Scalar> GbcState<F> {
    pub fn new(y: &[bool], weights: Vec<F>, learning_rate: F, tree_params: TreeParams) -> Self {
        let t: Vec<F> = bool_to_f(y);
        let sw: F = weights.iter().copied().sum();
        let sp: F = weights.iter().zip(&t).map(|(&w, &v)| w * v).sum();
        let eps = F::of(1e-12);
        let p = (sp / sw).max(eps).min(F::one() - eps);
        let init = (p / (F::one() - p)).ln();
        Self {
            model: Gbc {
                init,
                learning_rate,
                trees: Vec::new(),
            },
            tree_params,
            scores: vec![init; y.len()],
            weights,
            presorted: None,
        }
    }

    /// Weighted mean log-loss of the current scores.
    pub fn log_loss(&self, y: &[bool]) -> F {
        let sw: F = self.weights.iter().copied().sum();
        let total: F = self
            .scores
            .iter()
            .zip(y)
            .zip(&self.weights)
            .map(|((&s, &b), &w)| w * if b { softplus(-s) } else { softplus(s) })
            .sum();
        total / sw
    }
}

/// One boosting round: a depth-limited regression tree fitted to the negative
/// gradient `y - p`, Newton leaf values `Σ w r / Σ w p(1-p)`, added with the
/// learning rate.
pub fn gbc_fit_round<F: Scalar>(
    mut state: GbcState<F>,
    x: &DenseMatrix<F>,
    y: &[bool],
) -> GbcState<F> {
    let p: Vec<F> = state.scores.iter().map(|&s| sigmoid(s)).collect();
    let r: Vec<F> = y
        .iter()
        .zip(&p)
        .map(|(&b, &pi)| if b { F::one() - pi } else { -pi })
        .collect();
    let w = &state.weights;
    let leaf = |rows: &[usize]| {
        let (num, den) = rows.iter().fold((F::zero(), F::zero()), |(a, b), &i| {
            (a + w[i] * r[i], b + w[i] * p[i] * (F::one() - p[i]))
        });
        if den > F::min_positive_value() * F::of(1e6) {
            num / den
        } else {
            F::zero()
        }
    };
    let presorted = state.presorted.get_or_insert_with(|| Presorted::new(x));
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let tree = Tree::build::<rand_chacha::ChaCha8Rng>(
        x,
        &r,
        w,
        &rows,
        presorted,
        state.tree_params,
        None,
        &leaf,
    );
    let eta = state.model.learning_rate;
    for (i, s) in state.scores.iter_mut().enumerate() {
        *s += eta * tree.predict_row(x.row(i));
    }
    state.model.trees.push(tree);
    state
}

impl<F: Scalar> Gbc<F> {
    pub const DEFAULT_ROUNDS: usize = 100;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
    pub const DEFAULT_MAX_DEPTH: usize = 2;

    pub(crate) fn fit(spec: &ModelSpec, x: &DenseMatrix<F>, y: &[bool]) -> Result<Self, ModelError> {
        let rounds = spec.hp_count("n_rounds", Self::DEFAULT_ROUNDS, 0)?;
        let eta = F::of(spec.hp("learning_rate", Self::DEFAULT_LEARNING_RATE));
        let mut params = TreeParams::new(Criterion::Variance);
        params.max_depth = spec.hp_count("max_depth", Self::DEFAULT_MAX_DEPTH, 1)?;
        params.min_samples_leaf = spec.hp_count("min_samples_leaf", 1, 1)?;
        let mut state = GbcState::new(y, class_weights(y, spec.balanced()), eta, params);
        for _ in 0..rounds {
            state = gbc_fit_round(state, x, y);
        }
        Ok(state.model)
    }

    pub fn decision(&self, row: &[F]) -> F {
        self.init
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<F>()
    }

    pub fn predict_proba(&self, x: &DenseMatrix<F>) -> Vec<F> {
        (0..x.nrows()).map(|r| sigmoid(self.decision(x.row(r)))).collect()
    }
}
