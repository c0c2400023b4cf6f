//! Single-document pipeline configuration (TOML or JSON).
//!
//! Every section and field is optional and falls back to the owning module's
//! default; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalbench::{EvalConfig, EvalTask};
use crate::features::{FeatureConfig, FeatureError, FeatureSetName, FeatureSpec};
use crate::labeling::{DEFAULT_INTERVAL_BOUNDS, DEFAULT_MIN_SEGMENT_HOURS};
use crate::models::{ModelError, ModelFamily, ModelSpec, Task};
use crate::preprocess::DEFAULT_CORRELATION_THRESHOLD;
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML config: {0}")]
    Toml(String),
    #[error("invalid JSON config: {0}")]
    Json(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub min_segment_hours: f64,
    pub bounds: Vec<f64>,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            min_segment_hours: DEFAULT_MIN_SEGMENT_HOURS,
            bounds: DEFAULT_INTERVAL_BOUNDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub correlation_threshold: f64,
    /// Recipes kept for analysis; all recipes when absent.
    pub productive_recipes: Option<Vec<String>>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            productive_recipes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    #[serde(flatten)]
    pub params: FeatureConfig,
    pub feature_sets: Vec<FeatureSetName>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            params: FeatureConfig::default(),
            feature_sets: FeatureSetName::ALL.to_vec(),
        }
    }
}

/// A model grid entry; the task comes from the grid it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub family: ModelFamily,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl GridEntry {
    pub fn new(family: ModelFamily, hp: &[(&str, f64)]) -> Self {
        Self {
            family,
            hyperparameters: hp.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            seed: 0,
        }
    }

    pub fn spec(&self, task: Task) -> ModelSpec {
        ModelSpec {
            family: self.family,
            task,
            hyperparameters: self.hyperparameters.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub regression: Vec<GridEntry>,
    pub classification: Vec<GridEntry>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        use ModelFamily::*;
        Self {
            regression: vec![
                GridEntry::new(Lr, &[]),
                GridEntry::new(Tree, &[]),
                GridEntry::new(Rf, &[("n_trees", 30.0)]),
                GridEntry::new(SgdSvm, &[]),
                GridEntry::new(Mlp, &[("epochs", 20.0)]),
            ],
            classification: vec![
                GridEntry::new(Tree, &[("balanced", 1.0)]),
                GridEntry::new(Rf, &[("n_trees", 20.0), ("balanced", 1.0)]),
                GridEntry::new(Gbc, &[("balanced", 1.0)]),
                GridEntry::new(SgdSvm, &[("balanced", 1.0)]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub k: usize,
    pub seed: u64,
    pub task: EvalTask,
    /// Bounds scored by the interval task; the labeling bounds when absent.
    pub bounds: Option<Vec<f64>>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 42,
            task: EvalTask::TtfRegression,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub sim: SimConfig,
    pub labeling: LabelingConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeaturesSection,
    pub models: ModelsConfig,
    pub evaluation: EvaluationConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))
    }

    /// Reads TOML, or JSON when the file extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn feature_specs(&self) -> Vec<FeatureSpec> {
        self.features
            .feature_sets
            .iter()
            .map(|&n| FeatureSpec::new(n, self.features.params.window_runs))
            .collect()
    }

    /// The grid for `task`, validated.
    pub fn model_specs(&self, task: EvalTask) -> Result<Vec<ModelSpec>, ConfigError> {
        let (grid, t) = match task.model_task() {
            Task::Regression => (&self.models.regression, Task::Regression),
            Task::Classification => (&self.models.classification, Task::Classification),
        };
        grid.iter()
            .map(|g| {
                let s = g.spec(t);
                s.validate()?;
                Ok(s)
            })
            .collect()
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            k: self.evaluation.k,
            seed: self.evaluation.seed,
            bounds: self
                .evaluation
                .bounds
                .clone()
                .unwrap_or_else(|| self.labeling.bounds.clone()),
            correlation_threshold: self.preprocess.correlation_threshold,
            features: self.features.params.clone(),
        }
    }
}
