use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{bool_to_f, class_weights, ModelError, ModelSpec, Targets};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Variance,
}

impl Criterion {
    /// Weighted impurity of a node from its weight, weighted target sum and
    /// weighted square sum.
    fn cost<F: Scalar>(self, w: F, s: F, q: F) -> F {
        if w <= F::zero() {
            return F::zero();
        }
        match self {
            Criterion::Gini => (F::one() + F::one()) * s * (w - s) / w,
            Criterion::Variance => (q - s * s / w).max(F::zero()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "F: Scalar")]
pub enum Node<F: Scalar> {
    Leaf {
        value: F,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub const DEFAULT_MAX_DEPTH: usize = 6;
    pub const DEFAULT_MIN_SAMPLES_LEAF: usize = 5;

    pub fn new(criterion: Criterion) -> Self {
        Self {
            criterion,
            max_depth: Self::DEFAULT_MAX_DEPTH,
            min_samples_leaf: Self::DEFAULT_MIN_SAMPLES_LEAF,
            max_features: None,
        }
    }
}

/// CART tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Tree<F: Scalar> {
    pub nodes: Vec<Node<F>>,
}

/// Row order of every feature column, ascending by value then row index.
#[derive(Debug, Clone)]
pub struct Presorted {
    orders: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new<F: Scalar>(x: &DenseMatrix<F>) -> Self {
        let orders = (0..x.ncols())
            .map(|f| {
                let mut o: Vec<usize> = (0..x.nrows()).collect();
                o.sort_by(|&a, &b| x.get(a, f).total_order(&x.get(b, f)).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { orders }
    }
}

struct Builder<'a, F: Scalar, R> {
    x: &'a DenseMatrix<F>,
    y: &'a [F],
    w: &'a [F],
    params: TreeParams,
    rng: Option<&'a mut R>,
    leaf_value: &'a dyn Fn(&[usize]) -> F,
    nodes: Vec<Node<F>>,
    goes_left: Vec<bool>,
}

struct Best<F> {
    gain: F,
    feature: usize,
    threshold: F,
}

impl<F: Scalar, R: Rng> Builder<'_, F, R> {
    fn stats(&self, rows: &[usize]) -> (F, F, F) {
        rows.iter().fold((F::zero(), F::zero(), F::zero()), |(w, s, q), &r| {
            let (wi, yi) = (self.w[r], self.y[r]);
            (w + wi, s + wi * yi, q + wi * yi * yi)
        })
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.ncols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// `sorted[f]` lists the node's rows in ascending order of feature `f`.
    fn best_split(&mut self, sorted: &[Vec<usize>], parent_cost: F) -> Option<Best<F>> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = sorted[0].len();
        let crit = self.params.criterion;
        let (wt, st, qt) = self.stats(&sorted[0]);
        let mut best: Option<Best<F>> = None;
        for f in self.candidate_features() {
            let order = &sorted[f];
            let (mut wl, mut sl, mut ql) = (F::zero(), F::zero(), F::zero());
            for i in 0..n - 1 {
                let r = order[i];
                let (wi, yi) = (self.w[r], self.y[r]);
                wl += wi;
                sl += wi * yi;
                ql += wi * yi * yi;
                if i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                let (a, b) = (self.x.get(r, f), self.x.get(order[i + 1], f));
                if a == b {
                    continue;
                }
                let gain = parent_cost - crit.cost(wl, sl, ql) - crit.cost(wt - wl, st - sl, qt - ql);
                if best.as_ref().map_or(true, |bst| gain > bst.gain) {
                    let mut threshold = (a + b) / (F::one() + F::one());
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        let tol = parent_cost.abs() * F::epsilon() * F::of(16.0);
        best.filter(|b| b.gain > tol)
    }

    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: F::zero() });
        let rows = &sorted[0];
        let (w, s, q) = self.stats(rows);
        let cost = self.params.criterion.cost(w, s, q);
        let can_split = depth < self.params.max_depth
            && rows.len() >= 2 * self.params.min_samples_leaf.max(1)
            && cost > F::zero();
        let split = if can_split {
            self.best_split(&sorted, cost)
        } else {
            None
        };
        match split {
            None => {
                let mut rows = sorted[0].clone();
                rows.sort_unstable();
                self.nodes[id] = Node::Leaf {
                    value: (self.leaf_value)(&rows),
                };
            }
            Some(b) => {
                for &r in &sorted[0] {
                    self.goes_left[r] = self.x.get(r, b.feature) <= b.threshold;
                }
                let (l, r): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
                    .into_iter()
                    .map(|o| o.into_iter().partition(|&i| self.goes_left[i]))
                    .unzip();
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

/// Weighted mean of `y` over `rows` (0 for zero weight).
pub(crate) fn weighted_mean<F: Scalar>(y: &[F], w: &[F], rows: &[usize]) -> F {
    let (sw, sy) = rows
        .iter()
        .fold((F::zero(), F::zero()), |(a, b), &r| (a + w[r], b + w[r] * y[r]));
    if sw > F::zero() {
        sy / sw
    } else {
        F::zero()
    }
}

impl<F: Scalar> Tree<F> {
    /// Grows a tree on the distinct `rows` (row multiplicities belong in `w`).
    /// Leaves take `leaf_value(rows in leaf)`.
    #[allow(clippy::too_many_arguments)]
    pub fn build<R: Rng>(
        x: &DenseMatrix<F>,
        y: &[F],
        w: &[F],
        rows: &[usize],
        presorted: &Presorted,
        params: TreeParams,
        rng: Option<&mut R>,
        leaf_value: &dyn Fn(&[usize]) -> F,
    ) -> Self {
        let mut member = vec![false; x.nrows()];
        for &r in rows {
            member[r] = true;
        }
        let sorted: Vec<Vec<usize>> = if x.ncols() == 0 {
            vec![rows.to_vec()]
        } else {
            presorted
                .orders
                .iter()
                .map(|o| o.iter().copied().filter(|&r| member[r]).collect())
                .collect()
        };
        let mut b = Builder {
            x,
            y,
            w,
            params,
            rng,
            leaf_value,
            nodes: Vec::new(),
            goes_left: member,
        };
        b.grow(sorted, 0);
        Tree { nodes: b.nodes }
    }

    /// Deterministic tree with all features considered at each split.
    pub fn fit_weighted(x: &DenseMatrix<F>, y: &[F], w: &[F], params: TreeParams) -> Self {
        let leaf = |rows: &[usize]| weighted_mean(y, w, rows);
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Self::build::<rand_chacha::ChaCha8Rng>(x, y, w, &rows, &Presorted::new(x), params, None, &leaf)
    }

    pub(crate) fn fit_spec(
        spec: &ModelSpec,
        x: &DenseMatrix<F>,
        y: Targets<'_, F>,
    ) -> Result<Self, ModelError> {
        let (t, w, criterion) = targets_and_weights(spec, y);
        let mut params = TreeParams::new(criterion);
        params.max_depth = spec.hp_count("max_depth", params.max_depth, 1)?;
        params.min_samples_leaf = spec.hp_count("min_samples_leaf", params.min_samples_leaf, 1)?;
        Ok(Self::fit_weighted(x, &t, &w, params))
    }

    pub fn predict_row(&self, row: &[F]) -> F {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &DenseMatrix<F>) -> Vec<F> {
        (0..x.nrows()).map(|r| self.predict_row(x.row(r))).collect()
    }

    pub fn depth(&self) -> usize {
        fn go<F: Scalar>(nodes: &[Node<F>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Numeric targets, row weights and criterion for a spec and its targets.
pub(crate) fn targets_and_weights<F: Scalar>(
    spec: &ModelSpec,
    y: Targets<'_, F>,
) -> (Vec<F>, Vec<F>, Criterion) {
    match y {
        Targets::Regression(t) => (t.to_vec(), vec![F::one(); t.len()], Criterion::Variance),
        Targets::Classification(t) => (
            bool_to_f(t),
            class_weights(t, spec.balanced()),
            Criterion::Gini,
        ),
    }
}
