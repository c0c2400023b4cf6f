use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scaler::StandardScaler;
use super::{bool_to_f, class_weights, ModelError, ModelSpec, Targets, Task};
use crate::linalg::{dot, DenseMatrix};
use crate::scalar::{sigmoid, softplus, Scalar};

/// One hidden tanh layer and a single output unit: linear for regression,
/// logistic for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MlpNet<F: Scalar> {
    pub task: Task,
    pub n_in: usize,
    pub n_hidden: usize,
    /// Hidden weights, `n_hidden x n_in` row-major.
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: F,
}

impl<F: Scalar> MlpNet<F> {
    pub fn zeros(task: Task, n_in: usize, n_hidden: usize) -> Self {
        Self {
            task,
            n_in,
            n_hidden,
            w1: vec![F::zero(); n_hidden * n_in],
            b1: vec![F::zero(); n_hidden],
            w2: vec![F::zero(); n_hidden],
            b2: F::zero(),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)` for each layer.
    pub fn random(task: Task, n_in: usize, n_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(task, n_in, n_hidden);
        let a1 = 1.0 / (n_in.max(1) as f64).sqrt();
        let a2 = 1.0 / (n_hidden.max(1) as f64).sqrt();
        for v in net.w1.iter_mut().chain(net.b1.iter_mut()) {
            *v = F::of(rng.gen_range(-a1..=a1));
        }
        for v in net.w2.iter_mut() {
            *v = F::of(rng.gen_range(-a2..=a2));
        }
        net.b2 = F::of(rng.gen_range(-a2..=a2));
        net
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters flattened as `[w1, b1, w2, b2]`.
    pub fn params(&self) -> Vec<F> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[F]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = rest[0];
    }

    /// Output pre-activation; fills `hidden` with the tanh activations.
    fn forward(&self, row: &[F], hidden: &mut [F]) -> F {
        for (j, h) in hidden.iter_mut().enumerate() {
            let w = &self.w1[j * self.n_in..(j + 1) * self.n_in];
            *h = (dot(w, row) + self.b1[j]).tanh();
        }
        dot(&self.w2, hidden) + self.b2
    }

    fn sample_loss(&self, o: F, y: F) -> F {
        match self.task {
            Task::Regression => F::of(0.5) * (o - y) * (o - y),
            Task::Classification => softplus(o) - y * o,
        }
    }

    /// d loss / d output pre-activation.
    fn output_delta(&self, o: F, y: F) -> F {
        match self.task {
            Task::Regression => o - y,
            Task::Classification => sigmoid(o) - y,
        }
    }

    /// Backpropagates `delta` at the output into `grad` (flattened layout).
    fn accumulate(&self, row: &[F], hidden: &[F], delta: F, grad: &mut [F]) {
        let (nw1, nh) = (self.w1.len(), self.n_hidden);
        for j in 0..nh {
            let dh = delta * self.w2[j] * (F::one() - hidden[j] * hidden[j]);
            let g = &mut grad[j * self.n_in..(j + 1) * self.n_in];
            for (gk, &xk) in g.iter_mut().zip(row) {
                *gk += dh * xk;
            }
            grad[nw1 + j] += dh;
            grad[nw1 + nh + j] += delta * hidden[j];
        }
        grad[nw1 + 2 * nh] += delta;
    }

    /// Network output: a value (regression) or a probability (classification).
    pub fn output(&self, row: &[F]) -> F {
        let mut hidden = vec![F::zero(); self.n_hidden];
        let o = self.forward(row, &mut hidden);
        match self.task {
            Task::Regression => o,
            Task::Classification => sigmoid(o),
        }
    }
}

/// Mean loss: half squared error (regression) or log-loss (classification,
/// targets 0/1).
pub fn mlp_loss<F: Scalar>(net: &MlpNet<F>, x: &DenseMatrix<F>, y: &[F]) -> F {
    let mut hidden = vec![F::zero(); net.n_hidden];
    let total: F = (0..x.nrows())
        .map(|r| {
            let o = net.forward(x.row(r), &mut hidden);
            net.sample_loss(o, y[r])
        })
        .sum();
    total / F::of_usize(x.nrows().max(1))
}

/// Gradient of [`mlp_loss`] with respect to `[w1, b1, w2, b2]`.
pub fn mlp_gradient<F: Scalar>(net: &MlpNet<F>, x: &DenseMatrix<F>, y: &[F]) -> Vec<F> {
    let mut grad = vec![F::zero(); net.n_params()];
    let mut hidden = vec![F::zero(); net.n_hidden];
    for r in 0..x.nrows() {
        let row = x.row(r);
        let o = net.forward(row, &mut hidden);
        net.accumulate(row, &hidden, net.output_delta(o, y[r]), &mut grad);
    }
    let n = F::of_usize(x.nrows().max(1));
    grad.iter_mut().for_each(|g| *g /= n);
    grad
}

/// Trained MLP with its input (and, for regression, target) standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Mlp<F: Scalar> {
    pub scaler: StandardScaler<F>,
    pub target_scaler: Option<StandardScaler<F>>,
    pub net: MlpNet<F>,
}

impl<F: Scalar> Mlp<F> {
    pub const DEFAULT_HIDDEN: usize = 32;
    pub const DEFAULT_EPOCHS: usize = 200;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.01;

    pub(crate) fn fit(
        spec: &ModelSpec,
        x: &DenseMatrix<F>,
        y: Targets<'_, F>,
    ) -> Result<Self, ModelError> {
        let hidden = spec.hp_count("hidden", Self::DEFAULT_HIDDEN, 1)?;
        let epochs = spec.hp_count("epochs", Self::DEFAULT_EPOCHS, 1)?;
        let lr = F::of(spec.hp("learning_rate", Self::DEFAULT_LEARNING_RATE));
        let scaler = StandardScaler::fit(x);
        let xs = scaler.transform(x);
        let (t, w, target_scaler) = match y {
            Targets::Regression(v) => {
                let s = StandardScaler::fit_vec(v);
                let t = v.iter().map(|&a| s.forward_scalar(a)).collect();
                (t, vec![F::one(); v.len()], Some(s))
            }
            Targets::Classification(b) => (bool_to_f(b), class_weights(b, spec.balanced()), None),
        };
        let mut net = MlpNet::random(spec.task, x.ncols(), hidden, spec.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(super::split_seed(spec.seed, 1));
        let mut order: Vec<usize> = (0..xs.nrows()).collect();
        let mut h = vec![F::zero(); hidden];
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let row = xs.row(i);
                let o = net.forward(row, &mut h);
                let delta = lr * w[i] * net.output_delta(o, t[i]);
                for j in 0..hidden {
                    let dh = delta * net.w2[j] * (F::one() - h[j] * h[j]);
                    net.w2[j] -= delta * h[j];
                    net.b1[j] -= dh;
                    for (wk, &xk) in net.w1[j * net.n_in..(j + 1) * net.n_in].iter_mut().zip(row) {
                        *wk -= dh * xk;
                    }
                }
                net.b2 -= delta;
            }
        }
        Ok(Self {
            scaler,
            target_scaler,
            net,
        })
    }

    pub fn predict(&self, x: &DenseMatrix<F>) -> Vec<F> {
        let mut row = vec![F::zero(); x.ncols()];
        (0..x.nrows())
            .map(|r| {
                row.copy_from_slice(x.row(r));
                self.scaler.transform_row(&mut row);
                let o = self.net.output(&row);
                match &self.target_scaler {
                    Some(s) => s.inverse_scalar(o),
                    None => o,
                }
            })
            .collect()
    }
}
