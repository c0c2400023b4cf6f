//! Model zoo with one fit/predict contract.
//!
//! | family    | tasks                        | learned state                    |
//! |-----------|------------------------------|----------------------------------|
//! | `LR`      | regression                   | coefficients + intercept         |
//! | `SGD_SVM` | regression, classification   | linear weights (hinge / ε-loss)  |
//! | `TREE`    | regression, classification   | CART node array                  |
//! | `RF`      | regression, classification   | bagged CART trees                |
//! | `KNN`     | classification               | standardized training points     |
//! | `MLP`     | regression, classification   | one tanh hidden layer            |
//! | `GBC`     | classification              | boosted depth-2 regression trees |
//!
//! Every family accepts a `balanced` hyperparameter for classification
//! (non-zero: weight each class by `n / (2 n_class)`).

mod forest;
mod gbc;
mod knn;
mod linear;
mod mlp;
mod scaler;
mod sgd;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

pub use forest::Forest;
pub use gbc::{gbc_fit_round, Gbc, GbcState};
pub use knn::Knn;
pub use linear::LinearModel;
pub use mlp::{mlp_gradient, mlp_loss, Mlp, MlpNet};
pub use scaler::StandardScaler;
pub use sgd::SgdLinear;
pub use tree::{Criterion, Node, Presorted, Tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("classification target has a single class")]
    DegenerateTarget,
    #[error("feature columns {got:?} do not match the fit-time schema {expected:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("need at least 2 rows with matching targets, got {rows} rows and {targets} targets")]
    BadShape { rows: usize, targets: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("{family} does not support {task}")]
    UnsupportedTask { family: ModelFamily, task: Task },
    #[error("{family} has no hyperparameter {name:?}")]
    UnknownHyperparameter { family: ModelFamily, name: String },
    #[error("hyperparameter {name} = {value} is out of range")]
    InvalidHyperparameter { name: String, value: f64 },
    #[error("unknown model family {0:?}")]
    UnknownFamily(String),
    #[error("model document version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("model json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "SGD_SVM")]
    SgdSvm,
    #[serde(rename = "TREE")]
    Tree,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "GBC")]
    Gbc,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 7] = [
        ModelFamily::Lr,
        ModelFamily::SgdSvm,
        ModelFamily::Tree,
        ModelFamily::Rf,
        ModelFamily::Knn,
        ModelFamily::Mlp,
        ModelFamily::Gbc,
    ];

    pub fn supports(self, task: Task) -> bool {
        match self {
            ModelFamily::Lr => task == Task::Regression,
            ModelFamily::Knn | ModelFamily::Gbc => task == Task::Classification,
            _ => true,
        }
    }

    pub fn hyperparameters(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Lr => &[],
            ModelFamily::SgdSvm => &["alpha", "epochs", "eta0", "power_t", "epsilon", "balanced"],
            ModelFamily::Tree => &["max_depth", "min_samples_leaf", "balanced"],
            ModelFamily::Rf => &[
                "n_trees",
                "max_depth",
                "min_samples_leaf",
                "max_features",
                "balanced",
            ],
            ModelFamily::Knn => &["k", "balanced"],
            ModelFamily::Mlp => &["hidden", "epochs", "learning_rate", "balanced"],
            ModelFamily::Gbc => &[
                "n_rounds",
                "learning_rate",
                "max_depth",
                "min_samples_leaf",
                "balanced",
            ],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Lr => "LR",
            ModelFamily::SgdSvm => "SGD_SVM",
            ModelFamily::Tree => "TREE",
            ModelFamily::Rf => "RF",
            ModelFamily::Knn => "KNN",
            ModelFamily::Mlp => "MLP",
            ModelFamily::Gbc => "GBC",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub task: Task,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, task: Task) -> Self {
        Self {
            family,
            task,
            hyperparameters: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Short identifier such as `RF(n_trees=20)`.
    pub fn label(&self) -> String {
        if self.hyperparameters.is_empty() {
            return self.family.to_string();
        }
        let hp: Vec<String> = self
            .hyperparameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{}({})", self.family, hp.join(","))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.family.supports(self.task) {
            return Err(ModelError::UnsupportedTask {
                family: self.family,
                task: self.task,
            });
        }
        let known = self.family.hyperparameters();
        for (name, &value) in &self.hyperparameters {
            if !known.contains(&name.as_str()) {
                return Err(ModelError::UnknownHyperparameter {
                    family: self.family,
                    name: name.clone(),
                });
            }
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidHyperparameter {
                    name: name.clone(),
                    value,
                });
            }
        }
        Ok(())
    }

    fn hp(&self, name: &str, default: f64) -> f64 {
        self.hyperparameters.get(name).copied().unwrap_or(default)
    }

    fn hp_count(&self, name: &str, default: usize, min: usize) -> Result<usize, ModelError> {
        let v = self.hp(name, default as f64);
        if v.fract() != 0.0 || v < min as f64 {
            return Err(ModelError::InvalidHyperparameter {
                name: name.to_string(),
                value: v,
            });
        }
        Ok(v as usize)
    }

    fn balanced(&self) -> bool {
        self.hp("balanced", 0.0) != 0.0
    }
}

/// Training targets; the variant must match the spec's task.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, F> {
    Regression(&'a [F]),
    Classification(&'a [bool]),
}

impl<F> Targets<'_, F> {
    fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classification(y) => y.len(),
        }
    }

    fn task(&self) -> Task {
        match self {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification(_) => Task::Classification,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions<F> {
    Regression(Vec<F>),
    /// Labels plus a real score: a probability, or a margin for `SGD_SVM`.
    Classification { labels: Vec<bool>, scores: Vec<F> },
}

impl<F: Copy> Predictions<F> {
    pub fn values(&self) -> Option<&[F]> {
        match self {
            Predictions::Regression(v) => Some(v),
            Predictions::Classification { .. } => None,
        }
    }

    pub fn labels(&self) -> Option<&[bool]> {
        match self {
            Predictions::Classification { labels, .. } => Some(labels),
            Predictions::Regression(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", bound = "F: Scalar")]
pub enum ModelParams<F: Scalar> {
    #[serde(rename = "LR")]
    Linear(LinearModel<F>),
    #[serde(rename = "SGD_SVM")]
    Sgd(SgdLinear<F>),
    #[serde(rename = "TREE")]
    Tree(Tree<F>),
    #[serde(rename = "RF")]
    Forest(Forest<F>),
    #[serde(rename = "KNN")]
    Knn(Knn<F>),
    #[serde(rename = "MLP")]
    Mlp(Mlp<F>),
    #[serde(rename = "GBC")]
    Gbc(Gbc<F>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TrainedModel<F: Scalar> {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub params: ModelParams<F>,
}

/// Per-row weights: ones, or `n / (2 n_class)` when balancing.
pub fn class_weights<F: Scalar>(y: &[bool], balanced: bool) -> Vec<F> {
    if !balanced {
        return vec![F::one(); y.len()];
    }
    let n = y.len();
    let pos = y.iter().filter(|&&b| b).count();
    let neg = n - pos;
    let w = |c: usize| {
        if c == 0 {
            F::zero()
        } else {
            F::of_usize(n) / F::of_usize(2 * c)
        }
    };
    let (wp, wn) = (w(pos), w(neg));
    y.iter().map(|&b| if b { wp } else { wn }).collect()
}

/// SplitMix64 step; derives independent sub-seeds from one seed.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn bool_to_f<F: Scalar>(y: &[bool]) -> Vec<F> {
    y.iter().map(|&b| if b { F::one() } else { F::zero() }).collect()
}

/// Fits `spec` on `x` and `y`. Deterministic given all three.
pub fn fit<F: Scalar>(
    spec: &ModelSpec,
    x: &FeatureMatrix<F>,
    y: Targets<'_, F>,
) -> Result<TrainedModel<F>, ModelError> {
    spec.validate()?;
    if y.task() != spec.task {
        return Err(ModelError::UnsupportedTask {
            family: spec.family,
            task: y.task(),
        });
    }
    let n = x.nrows();
    if n < 2 || y.len() != n {
        return Err(ModelError::BadShape {
            rows: n,
            targets: y.len(),
        });
    }
    if !x.data.all_finite() {
        return Err(ModelError::NonFinite);
    }
    if let Targets::Regression(t) = y {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
    }
    if let Targets::Classification(t) = y {
        if t.iter().all(|&b| b == t[0]) {
            return Err(ModelError::DegenerateTarget);
        }
    }
    let data = &x.data;
    let params = match (spec.family, y) {
        (ModelFamily::Lr, Targets::Regression(t)) => ModelParams::Linear(LinearModel::fit(data, t)),
        (ModelFamily::SgdSvm, y) => ModelParams::Sgd(SgdLinear::fit(spec, data, y)?),
        (ModelFamily::Tree, y) => ModelParams::Tree(Tree::fit_spec(spec, data, y)?),
        (ModelFamily::Rf, y) => ModelParams::Forest(Forest::fit(spec, data, y)?),
        (ModelFamily::Knn, Targets::Classification(t)) => ModelParams::Knn(Knn::fit(spec, data, t)?),
        (ModelFamily::Mlp, y) => ModelParams::Mlp(Mlp::fit(spec, data, y)?),
        (ModelFamily::Gbc, Targets::Classification(t)) => ModelParams::Gbc(Gbc::fit(spec, data, t)?),
        (family, y) => {
            return Err(ModelError::UnsupportedTask {
                family,
                task: y.task(),
            })
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        feature_names: x.names.clone(),
        params,
    })
}

impl<F: Scalar> TrainedModel<F> {
    pub fn predict(&self, x: &FeatureMatrix<F>) -> Result<Predictions<F>, ModelError> {
        if x.names != self.feature_names || x.ncols() != self.feature_names.len() {
            return Err(ModelError::SchemaMismatch {
                expected: self.feature_names.clone(),
                got: x.names.clone(),
            });
        }
        if !x.data.all_finite() {
            return Err(ModelError::NonFinite);
        }
        let raw = self.raw_scores(&x.data);
        Ok(match self.spec.task {
            Task::Regression => Predictions::Regression(raw),
            Task::Classification => {
                let threshold = match self.params {
                    ModelParams::Sgd(_) => F::zero(),
                    _ => F::of(0.5),
                };
                let labels = match &self.params {
                    ModelParams::Knn(k) => k.predict_labels(&x.data),
                    _ => raw.iter().map(|&s| s >= threshold).collect(),
                };
                Predictions::Classification {
                    labels,
                    scores: raw,
                }
            }
        })
    }

    fn raw_scores(&self, x: &DenseMatrix<F>) -> Vec<F> {
        match &self.params {
            ModelParams::Linear(m) => m.predict(x),
            ModelParams::Sgd(m) => m.predict(x),
            ModelParams::Tree(m) => m.predict(x),
            ModelParams::Forest(m) => m.predict(x),
            ModelParams::Knn(m) => m.predict_scores(x),
            ModelParams::Mlp(m) => m.predict(x),
            ModelParams::Gbc(m) => m.predict_proba(x),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        let version = v
            .get("format_version")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| ModelError::Json("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(ModelError::UnsupportedVersion(version as u32));
        }
        serde_json::from_value(v).map_err(|e| ModelError::Json(e.to_string()))
    }
}
