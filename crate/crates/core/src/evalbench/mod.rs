//! Benchmarks, grouped cross-validation and metrics for the three tasks:
//! TTF regression, health regression and interval classification.
//!
//! All fitted state (recipe statistics, pruning, penalties, `x̄` for B3 and the
//! models) comes from the training folds of each split. B2 is the exception:
//! it peeks at the true targets of the evaluated segment by construction.

mod benchmarks;
mod folds;
mod metrics;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    materialize, FeatureBlocks, FeatureConfig, FeatureEngineer, FeatureError, FeatureMatrix,
    FeatureSpec, Timeline,
};
use crate::ingest::EventLog;
use crate::labeling::{bound_key, elapsed_hours, LabeledRun, Segment, DEFAULT_INTERVAL_BOUNDS};
use crate::models::{fit, ModelError, ModelSpec, Predictions, Targets, Task};
use crate::preprocess::DEFAULT_CORRELATION_THRESHOLD;

pub use benchmarks::{
    benchmark_b1, benchmark_b2, benchmark_b3, benchmark_b3_health, mean_segment_hours,
    BenchmarkKind, BenchmarkPrediction,
};
pub use folds::{grouped_kfold, FoldAssignment};
pub use metrics::{f1_score, prf1, relative_rmse, rmse, Prf1};
pub use report::{interval_table_csv, plot_csv, regression_table_csv, summary_csv};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{segments} segments cannot be split into {k} folds")]
    TooFewSegments { segments: usize, k: usize },
    #[error("benchmark RMSE is zero; relative RMSE undefined")]
    ZeroBenchmark,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no labeled training data")]
    NoTrainingData,
    #[error("interval task needs at least one bound")]
    NoBounds,
    #[error("bound {0} has no interval labels; relabel with this bound")]
    MissingBound(String),
    #[error("unknown task {0:?} (expected ttf, health or interval)")]
    UnknownTask(String),
    #[error("fold {fold}: {source}")]
    Feature {
        fold: usize,
        #[source]
        source: FeatureError,
    },
    #[error("fold {fold}, {model} on {feature_set}: {source}")]
    Model {
        fold: usize,
        model: String,
        feature_set: String,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    TtfRegression,
    HealthRegression,
    IntervalClassification,
}

impl EvalTask {
    pub fn model_task(self) -> Task {
        match self {
            EvalTask::IntervalClassification => Task::Classification,
            _ => Task::Regression,
        }
    }
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalTask::TtfRegression => "ttf_regression",
            EvalTask::HealthRegression => "health_regression",
            EvalTask::IntervalClassification => "interval_classification",
        })
    }
}

impl FromStr for EvalTask {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ttf" | "ttf_regression" => Ok(EvalTask::TtfRegression),
            "health" | "health_regression" => Ok(EvalTask::HealthRegression),
            "interval" | "interval_classification" => Ok(EvalTask::IntervalClassification),
            _ => Err(EvalError::UnknownTask(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    /// Interval bounds evaluated by the classification task.
    pub bounds: Vec<f64>,
    pub correlation_threshold: f64,
    pub features: FeatureConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 42,
            bounds: DEFAULT_INTERVAL_BOUNDS.to_vec(),
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            features: FeatureConfig::default(),
        }
    }
}

/// Labeled runs of complete segments, the only rows that are evaluated.
#[derive(Debug, Clone)]
pub struct EvalData<'a> {
    pub log: &'a EventLog,
    pub labeled: &'a [LabeledRun],
    pub segments: &'a [Segment],
    pub timeline: Timeline,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    /// Index into the labeled-run slice.
    pub labeled: usize,
    /// Index into `EventLog::runs`.
    pub run: usize,
    pub segment: usize,
    pub ttf: f64,
    pub health: f64,
    /// Productive hours of the segment up to and including this run.
    pub elapsed: f64,
}

impl<'a> EvalData<'a> {
    pub fn new(log: &'a EventLog, labeled: &'a [LabeledRun], segments: &'a [Segment]) -> Self {
        let seg_index: BTreeMap<&str, usize> = segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.segment_id.as_str(), i))
            .collect();
        let mut elapsed_by_run = BTreeMap::new();
        for s in segments.iter().filter(|s| s.is_complete()) {
            for (&r, e) in s.runs.iter().zip(elapsed_hours(&log.runs, s)) {
                elapsed_by_run.insert(r, e);
            }
        }
        let rows = labeled
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let segment = *seg_index.get(l.segment_id.as_str())?;
                if l.censored || !segments[segment].is_complete() {
                    return None;
                }
                Some(EvalRow {
                    labeled: i,
                    run: l.run,
                    segment,
                    ttf: l.ttf?,
                    health: l.health?,
                    elapsed: *elapsed_by_run.get(&l.run)?,
                })
            })
            .collect();
        Self {
            log,
            labeled,
            segments,
            timeline: Timeline::new(&log.runs, segments),
            rows,
        }
    }

    pub fn segment_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .rows
            .iter()
            .map(|r| self.segments[r.segment].segment_id.clone())
            .collect();
        ids.dedup();
        ids
    }

    pub fn assign_folds(&self, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
        grouped_kfold(&self.segment_ids(), k, seed)
    }

    fn fold_of_row(&self, folds: &FoldAssignment, row: &EvalRow) -> usize {
        folds
            .fold_of(&self.segments[row.segment].segment_id)
            .expect("every evaluated segment is assigned")
    }

    fn interval_label(&self, row: &EvalRow, key: &str) -> Result<bool, EvalError> {
        self.labeled[row.labeled]
            .interval_labels
            .get(key)
            .copied()
            .ok_or_else(|| EvalError::MissingBound(key.to_string()))
    }
}

/// Everything fitted on the training side of one split, plus test features.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFold {
    pub fold: usize,
    /// Indices into `EvalData::rows`.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub engineer: FeatureEngineer,
    pub train_blocks: FeatureBlocks,
    pub test_blocks: FeatureBlocks,
    /// Mean productive hours of the training segments (B3's `x̄`).
    pub mean_segment_hours: f64,
}

pub fn prepare_fold(
    data: &EvalData<'_>,
    folds: &FoldAssignment,
    fold: usize,
    features: &FeatureConfig,
    correlation_threshold: f64,
) -> Result<PreparedFold, EvalError> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in data.rows.iter().enumerate() {
        if data.fold_of_row(folds, r) == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() {
        return Err(EvalError::NoTrainingData);
    }
    let err = |source| EvalError::Feature { fold, source };
    let train_labeled: Vec<&LabeledRun> =
        train.iter().map(|&i| &data.labeled[data.rows[i].labeled]).collect();
    let engineer = FeatureEngineer::fit(
        data.log,
        &data.timeline,
        &train_labeled,
        features,
        correlation_threshold,
    )
    .map_err(err)?;
    let runs = |idx: &[usize]| idx.iter().map(|&i| data.rows[i].run).collect::<Vec<_>>();
    let train_blocks = engineer
        .blocks(data.log, &data.timeline, &runs(&train))
        .map_err(err)?;
    let test_blocks = engineer
        .blocks(data.log, &data.timeline, &runs(&test))
        .map_err(err)?;
    let mut seen = std::collections::BTreeSet::new();
    let hours: Vec<f64> = train
        .iter()
        .map(|&i| data.rows[i].segment)
        .filter(|s| seen.insert(*s))
        .map(|s| data.segments[s].total_productive_hours)
        .collect();
    Ok(PreparedFold {
        fold,
        train,
        test,
        engineer,
        train_blocks,
        test_blocks,
        mean_segment_hours: mean_segment_hours(&hours)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Model,
    Benchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub bound: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    /// Against B3 on the same rows; absent when B3's RMSE is 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub intervals: Vec<IntervalMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: RowKind,
    /// Model label such as `RF(n_trees=20)`, or `B1`/`B2`/`B3`.
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_set: Option<String>,
    pub pooled: Metrics,
    pub folds: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub k: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bounds: Vec<f64>,
    pub n_runs: usize,
    pub n_segments: usize,
    pub fold_sizes: Vec<usize>,
    /// B3's `x̄` per fold.
    pub mean_segment_hours: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn benchmark(&self, kind: BenchmarkKind) -> Option<&ReportRow> {
        let name = kind.to_string();
        self.rows
            .iter()
            .find(|r| r.kind == RowKind::Benchmark && r.model == name)
    }

    pub fn model_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Model)
    }

    /// Lowest pooled RMSE per feature set (first row wins ties).
    pub fn best_regression_per_feature_set(&self) -> BTreeMap<String, &ReportRow> {
        let mut best: BTreeMap<String, &ReportRow> = BTreeMap::new();
        for r in self.model_rows() {
            let (Some(fs), Some(x)) = (&r.feature_set, r.pooled.rmse) else {
                continue;
            };
            match best.get(fs) {
                Some(b) if b.pooled.rmse.is_some_and(|v| v <= x) => {}
                _ => {
                    best.insert(fs.clone(), r);
                }
            }
        }
        best
    }

    /// Highest pooled F1 per bound over all model rows (first row wins ties),
    /// with the interval metrics of that row.
    pub fn best_f1_per_bound(&self) -> Vec<(&ReportRow, &IntervalMetrics)> {
        (0..self.bounds.len())
            .filter_map(|b| {
                let mut best: Option<(&ReportRow, &IntervalMetrics)> = None;
                for r in self.model_rows() {
                    let m = r.pooled.intervals.get(b)?;
                    if best.map_or(true, |(_, bm)| m.f1 > bm.f1) {
                        best = Some((r, m));
                    }
                }
                best
            })
            .collect()
    }
}

/// Per-run pooled predictions, kept for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    /// Indices into `EvalData::rows`, in pooled (fold, row) order.
    pub rows: Vec<usize>,
    pub folds: Vec<usize>,
    pub truth: Vec<f64>,
    /// Regression predictions per report row (same order as the report).
    pub values: Vec<Vec<f64>>,
    /// Classification labels per report row, then per bound.
    pub labels: Vec<Vec<Vec<bool>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: PredictionTable,
}

struct RowAccumulator {
    kind: RowKind,
    model: String,
    feature_set: Option<String>,
    values: Vec<f64>,
    labels: Vec<Vec<bool>>,
    fold_spans: Vec<(usize, usize)>,
}

impl RowAccumulator {
    fn new(kind: RowKind, model: String, feature_set: Option<String>, n_bounds: usize) -> Self {
        Self {
            kind,
            model,
            feature_set,
            values: Vec::new(),
            labels: vec![Vec::new(); n_bounds],
            fold_spans: Vec::new(),
        }
    }
}

fn regression_metrics(pred: &[f64], truth: &[f64], b3: &[f64]) -> Result<Metrics, EvalError> {
    let x = rmse(pred, truth)?;
    let b = rmse(b3, truth)?;
    Ok(Metrics {
        rmse: Some(x),
        relative_rmse: relative_rmse(x, b).ok(),
        intervals: Vec::new(),
    })
}

fn interval_metrics(pred: &[Vec<bool>], truth: &[Vec<bool>], bounds: &[f64]) -> Result<Metrics, EvalError> {
    let intervals = bounds
        .iter()
        .zip(pred.iter().zip(truth))
        .map(|(&bound, (p, t))| {
            let m = prf1(p, t)?;
            Ok(IntervalMetrics {
                bound,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(Metrics {
        rmse: None,
        relative_rmse: None,
        intervals,
    })
}

/// Grouped k-fold evaluation of every (feature set, model) pair plus the
/// three benchmarks. Rows: feature sets × models in the given order, then B1–B3.
pub fn run_task(
    task: EvalTask,
    feature_specs: &[FeatureSpec],
    model_specs: &[ModelSpec],
    data: &EvalData<'_>,
    config: &EvalConfig,
) -> Result<EvalOutcome, EvalError> {
    let bounds: Vec<f64> = if task == EvalTask::IntervalClassification {
        if config.bounds.is_empty() {
            return Err(EvalError::NoBounds);
        }
        config.bounds.clone()
    } else {
        Vec::new()
    };
    let keys: Vec<String> = bounds.iter().map(|&b| bound_key(b)).collect();
    let folds = data.assign_folds(config.k, config.seed)?;
    let nb = bounds.len();

    let mut acc: Vec<RowAccumulator> = Vec::new();
    for fs in feature_specs {
        for m in model_specs {
            acc.push(RowAccumulator::new(
                RowKind::Model,
                m.label(),
                Some(fs.name.to_string()),
                nb,
            ));
        }
    }
    for kind in BenchmarkKind::ALL {
        acc.push(RowAccumulator::new(RowKind::Benchmark, kind.to_string(), None, nb));
    }

    let target = |r: &EvalRow| match task {
        EvalTask::HealthRegression => r.health,
        _ => r.ttf,
    };
    let mut table = PredictionTable {
        rows: Vec::new(),
        folds: Vec::new(),
        truth: Vec::new(),
        values: Vec::new(),
        labels: Vec::new(),
    };
    let mut truth_labels: Vec<Vec<bool>> = vec![Vec::new(); nb];
    let mut b3_values: Vec<f64> = Vec::new();
    let mut fold_sizes = Vec::new();
    let mut xbars = Vec::new();

    for fold in 0..config.k {
        let prep = prepare_fold(data, &folds, fold, &config.features, config.correlation_threshold)?;
        let start = table.rows.len();
        let end = start + prep.test.len();
        fold_sizes.push(prep.test.len());
        xbars.push(prep.mean_segment_hours);
        let train_rows: Vec<&EvalRow> = prep.train.iter().map(|&i| &data.rows[i]).collect();
        let test_rows: Vec<&EvalRow> = prep.test.iter().map(|&i| &data.rows[i]).collect();
        let y_train: Vec<f64> = train_rows.iter().map(|r| target(r)).collect();
        let y_test: Vec<f64> = test_rows.iter().map(|r| target(r)).collect();
        let label_sets = |rows: &[&EvalRow]| -> Result<Vec<Vec<bool>>, EvalError> {
            keys.iter()
                .map(|k| rows.iter().map(|r| data.interval_label(r, k)).collect())
                .collect()
        };
        let train_labels = label_sets(&train_rows)?;
        let test_labels = label_sets(&test_rows)?;

        table.rows.extend(&prep.test);
        table.folds.extend(std::iter::repeat(fold).take(prep.test.len()));
        table.truth.extend(&y_test);
        for (t, l) in truth_labels.iter_mut().zip(&test_labels) {
            t.extend(l);
        }

        let mut slot = 0;
        for fs in feature_specs {
            let ferr = |source| EvalError::Feature { fold, source };
            let x_train: FeatureMatrix<f64> = materialize(fs, &prep.train_blocks).map_err(ferr)?;
            let x_test: FeatureMatrix<f64> = materialize(fs, &prep.test_blocks).map_err(ferr)?;
            for m in model_specs {
                let mut spec = m.clone();
                spec.task = task.model_task();
                let merr = |source| EvalError::Model {
                    fold,
                    model: spec.label(),
                    feature_set: fs.name.to_string(),
                    source,
                };
                let row = &mut acc[slot];
                slot += 1;
                if task == EvalTask::IntervalClassification {
                    for (b, y) in train_labels.iter().enumerate() {
                        let model = fit(&spec, &x_train, Targets::Classification(y)).map_err(merr)?;
                        let p = model.predict(&x_test).map_err(merr)?;
                        row.labels[b].extend(p.labels().expect("classification"));
                    }
                } else {
                    let model = fit(&spec, &x_train, Targets::Regression(&y_train)).map_err(merr)?;
                    match model.predict(&x_test).map_err(merr)? {
                        Predictions::Regression(v) => row.values.extend(v),
                        Predictions::Classification { .. } => unreachable!("regression task"),
                    }
                }
                row.fold_spans.push((start, end));
            }
        }

        let elapsed: Vec<f64> = test_rows.iter().map(|r| r.elapsed).collect();
        let seg: Vec<usize> = test_rows.iter().map(|r| r.segment).collect();
        let ttf_train: Vec<f64> = train_rows.iter().map(|r| r.ttf).collect();
        let ttf_test: Vec<f64> = test_rows.iter().map(|r| r.ttf).collect();
        let benches = match task {
            EvalTask::HealthRegression => [
                benchmark_b1(&y_train, y_test.len())?,
                benchmark_b2(&seg, &y_test),
                benchmark_b3_health(prep.mean_segment_hours, &elapsed),
            ],
            _ => [
                benchmark_b1(&ttf_train, ttf_test.len())?,
                benchmark_b2(&seg, &ttf_test),
                benchmark_b3(prep.mean_segment_hours, &elapsed),
            ],
        };
        b3_values.extend(&benches[2].values);
        for (b, row) in benches.iter().zip(acc[slot..].iter_mut()) {
            if task == EvalTask::IntervalClassification {
                for (l, &bound) in row.labels.iter_mut().zip(&bounds) {
                    l.extend(b.values.iter().map(|&v| v <= bound));
                }
            } else {
                row.values.extend(&b.values);
            }
            row.fold_spans.push((start, end));
        }
    }

    let mut rows = Vec::with_capacity(acc.len());
    for a in &acc {
        let metrics = |lo: usize, hi: usize| -> Result<Metrics, EvalError> {
            if task == EvalTask::IntervalClassification {
                let p: Vec<Vec<bool>> = a.labels.iter().map(|l| l[lo..hi].to_vec()).collect();
                let t: Vec<Vec<bool>> = truth_labels.iter().map(|l| l[lo..hi].to_vec()).collect();
                interval_metrics(&p, &t, &bounds)
            } else {
                regression_metrics(&a.values[lo..hi], &table.truth[lo..hi], &b3_values[lo..hi])
            }
        };
        let per_fold = a
            .fold_spans
            .iter()
            .map(|&(lo, hi)| metrics(lo, hi))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ReportRow {
            kind: a.kind,
            model: a.model.clone(),
            feature_set: a.feature_set.clone(),
            pooled: metrics(0, table.rows.len())?,
            folds: per_fold,
        });
    }
    for a in acc {
        table.values.push(a.values);
        table.labels.push(a.labels);
    }

    let report = EvalReport {
        task,
        k: config.k,
        seed: config.seed,
        bounds,
        n_runs: data.rows.len(),
        n_segments: folds.folds.len(),
        fold_sizes,
        mean_segment_hours: xbars,
        rows,
    };
    Ok(EvalOutcome {
        report,
        predictions: table,
    })
}
