use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scaler::StandardScaler;
use super::{class_weights, ModelError, ModelSpec, Targets};
use crate::linalg::{dot, DenseMatrix};
use crate::scalar::Scalar;

/// Linear SVM (hinge loss) or SVR (ε-insensitive loss) trained by SGD with an
/// inverse-scaling step `eta0 / t^power_t` and L2 penalty `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SgdLinear<F: Scalar> {
    pub scaler: StandardScaler<F>,
    /// Present for regression: targets are learned in standardized units.
    pub target_scaler: Option<StandardScaler<F>>,
    pub weights: Vec<F>,
    pub intercept: F,
    /// Regularized training objective after each epoch (scaled units).
    pub objective_history: Vec<F>,
}

struct Hyper<F> {
    alpha: F,
    epochs: usize,
    eta0: F,
    power_t: F,
    epsilon: F,
}

impl<F: Scalar> SgdLinear<F> {
    pub(crate) fn fit(
        spec: &ModelSpec,
        x: &DenseMatrix<F>,
        y: Targets<'_, F>,
    ) -> Result<Self, ModelError> {
        let h = Hyper {
            alpha: F::of(spec.hp("alpha", 1e-4)),
            epochs: spec.hp_count("epochs", 50, 1)?,
            eta0: F::of(spec.hp("eta0", 0.01)),
            power_t: F::of(spec.hp("power_t", 0.25)),
            epsilon: F::of(spec.hp("epsilon", 0.1)),
        };
        let scaler = StandardScaler::fit(x);
        let xs = scaler.transform(x);
        let (t, w, target_scaler, hinge) = match y {
            Targets::Classification(b) => {
                let t: Vec<F> = b.iter().map(|&v| if v { F::one() } else { -F::one() }).collect();
                (t, class_weights(b, spec.balanced()), None, true)
            }
            Targets::Regression(v) => {
                let s = StandardScaler::fit_vec(v);
                let t = v.iter().map(|&a| s.forward_scalar(a)).collect();
                (t, vec![F::one(); v.len()], Some(s), false)
            }
        };
        let mut m = Self {
            scaler,
            target_scaler,
            weights: vec![F::zero(); x.ncols()],
            intercept: F::zero(),
            objective_history: Vec::with_capacity(h.epochs),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut order: Vec<usize> = (0..xs.nrows()).collect();
        let mut step = 1usize;
        for _ in 0..h.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let eta = h.eta0 / F::of_usize(step).powf(h.power_t);
                step += 1;
                let row = xs.row(i);
                let p = dot(&m.weights, row) + m.intercept;
                let g = if hinge {
                    if t[i] * p < F::one() {
                        t[i]
                    } else {
                        F::zero()
                    }
                } else {
                    let r = t[i] - p;
                    if r > h.epsilon {
                        F::one()
                    } else if r < -h.epsilon {
                        -F::one()
                    } else {
                        F::zero()
                    }
                };
                let shrink = F::one() - eta * h.alpha;
                let step_g = eta * w[i] * g;
                for (wj, &xj) in m.weights.iter_mut().zip(row) {
                    *wj = *wj * shrink + step_g * xj;
                }
                m.intercept += step_g;
            }
            let obj = m.objective(&xs, &t, &w, hinge, h.alpha, h.epsilon);
            m.objective_history.push(obj);
        }
        Ok(m)
    }

    fn objective(&self, xs: &DenseMatrix<F>, t: &[F], w: &[F], hinge: bool, alpha: F, eps: F) -> F {
        let n = F::of_usize(xs.nrows());
        let loss: F = (0..xs.nrows())
            .map(|i| {
                let p = dot(&self.weights, xs.row(i)) + self.intercept;
                let l = if hinge {
                    (F::one() - t[i] * p).max(F::zero())
                } else {
                    ((t[i] - p).abs() - eps).max(F::zero())
                };
                w[i] * l
            })
            .sum();
        let half = F::of(0.5);
        loss / n + half * alpha * dot(&self.weights, &self.weights)
    }

    /// Margin for classification, target-scale value for regression.
    pub fn predict(&self, x: &DenseMatrix<F>) -> Vec<F> {
        let mut row = vec![F::zero(); x.ncols()];
        (0..x.nrows())
            .map(|r| {
                row.copy_from_slice(x.row(r));
                self.scaler.transform_row(&mut row);
                let p = dot(&self.weights, &row) + self.intercept;
                match &self.target_scaler {
                    Some(s) => s.inverse_scalar(p),
                    None => p,
                }
            })
            .collect()
    }
}
