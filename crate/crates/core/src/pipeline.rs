//! In-memory stage functions shared by the command-line driver and tests.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::evalbench::{run_task, EvalData, EvalError, EvalOutcome, EvalTask};
use crate::features::{
    materialize, CodePenalty, EventSource, FeatureEngineer, FeatureError, FeatureMatrix, Penalties,
};
use crate::ingest::{filter_recipes, EventLog, IngestError};
use crate::labeling::{bound_key, label_log, CleaningReport, LabelError, LabeledRun, Segment};
use crate::models::{fit, ModelError, Targets, TrainedModel};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no labeled run of a complete segment")]
    NoCompleteRuns,
}

/// Output of the labeling stage. `log` is the recipe-filtered log that
/// `labeled[i].run` and `segments[j].runs` index into.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLog {
    pub log: EventLog,
    pub labeled: Vec<LabeledRun>,
    pub segments: Vec<Segment>,
    pub cleaning: CleaningReport,
}

impl LabeledLog {
    pub fn eval_data(&self) -> EvalData<'_> {
        EvalData::new(&self.log, &self.labeled, &self.segments)
    }
}

/// Applies the productive-recipe filter when configured.
pub fn filter_log(log: &EventLog, config: &PipelineConfig) -> Result<EventLog, PipelineError> {
    Ok(match &config.preprocess.productive_recipes {
        Some(r) => filter_recipes(log, &r.iter().cloned().collect::<BTreeSet<_>>())?,
        None => log.clone(),
    })
}

pub fn label_stage(log: &EventLog, config: &PipelineConfig) -> Result<LabeledLog, PipelineError> {
    let log = filter_log(log, config)?;
    let (labeled, segments, cleaning) = label_log(
        &log,
        &config.labeling.bounds,
        config.labeling.min_segment_hours,
    )?;
    Ok(LabeledLog {
        log,
        labeled,
        segments,
        cleaning,
    })
}

pub fn evaluate(
    data: &LabeledLog,
    config: &PipelineConfig,
    task: EvalTask,
) -> Result<EvalOutcome, PipelineError> {
    let eval = data.eval_data();
    Ok(run_task(
        task,
        &config.feature_specs(),
        &config.model_specs(task)?,
        &eval,
        &config.eval_config(),
    )?)
}

/// Feature state fitted on every labeled run of a complete segment.
pub fn fit_engineer(
    data: &LabeledLog,
    config: &PipelineConfig,
) -> Result<(FeatureEngineer, Vec<usize>), PipelineError> {
    let eval = data.eval_data();
    if eval.rows.is_empty() {
        return Err(PipelineError::NoCompleteRuns);
    }
    let train: Vec<&LabeledRun> = eval.rows.iter().map(|r| &data.labeled[r.labeled]).collect();
    let engineer = FeatureEngineer::fit(
        &data.log,
        &eval.timeline,
        &train,
        &config.features.params,
        config.preprocess.correlation_threshold,
    )?;
    let rows = eval.rows.iter().map(|r| r.labeled).collect();
    Ok((engineer, rows))
}

/// Feature matrices of every configured set over the complete-segment runs.
/// Row ids are run ids.
pub fn feature_tables(
    data: &LabeledLog,
    config: &PipelineConfig,
) -> Result<(FeatureEngineer, Vec<String>, Vec<(String, FeatureMatrix<f64>)>), PipelineError> {
    let (engineer, rows) = fit_engineer(data, config)?;
    let eval = data.eval_data();
    let runs: Vec<usize> = rows.iter().map(|&l| data.labeled[l].run).collect();
    let blocks = engineer.blocks(&data.log, &eval.timeline, &runs)?;
    let ids = rows.iter().map(|&l| data.labeled[l].run_id.clone()).collect();
    let tables = config
        .feature_specs()
        .iter()
        .map(|fs| Ok((fs.name.to_string(), materialize(fs, &blocks)?)))
        .collect::<Result<_, FeatureError>>()?;
    Ok((engineer, ids, tables))
}

/// Pooled per-code penalty rows for both event sources, each ordered by
/// ascending median TTF.
pub fn penalty_report(
    data: &LabeledLog,
    config: &PipelineConfig,
) -> Result<Vec<(EventSource, CodePenalty)>, PipelineError> {
    let mut pooled = config.clone();
    pooled.features.params.pooled_penalties = true;
    let (engineer, _) = fit_engineer(data, &pooled)?;
    let mut out = Vec::new();
    for (source, p) in [
        (EventSource::Violation, &engineer.violation_penalties),
        (EventSource::Alarm, &engineer.alarm_penalties),
    ] {
        if let Penalties::Pooled(t) = p {
            out.extend(t.ranked().into_iter().map(|c| (source, c.clone())));
        }
    }
    Ok(out)
}

/// Fits every configured (feature set, model) pair on all complete-segment
/// runs. `bound` selects the interval label for classification.
pub fn train_all(
    data: &LabeledLog,
    config: &PipelineConfig,
    task: EvalTask,
    bound: Option<f64>,
) -> Result<(FeatureEngineer, BTreeMap<String, TrainedModel<f64>>), PipelineError> {
    let (engineer, _) = fit_engineer(data, config)?;
    let eval = data.eval_data();
    let runs: Vec<usize> = eval.rows.iter().map(|r| r.run).collect();
    let blocks = engineer.blocks(&data.log, &eval.timeline, &runs)?;
    let specs = config.model_specs(task)?;

    let y_reg: Vec<f64> = eval
        .rows
        .iter()
        .map(|r| if task == EvalTask::HealthRegression { r.health } else { r.ttf })
        .collect();
    let y_cls: Vec<bool> = match task {
        EvalTask::IntervalClassification => {
            let b = bound
                .or_else(|| config.eval_config().bounds.first().copied())
                .ok_or(EvalError::NoBounds)?;
            let key = bound_key(b);
            eval.rows
                .iter()
                .map(|r| {
                    data.labeled[r.labeled]
                        .interval_labels
                        .get(&key)
                        .copied()
                        .ok_or_else(|| EvalError::MissingBound(key.clone()))
                })
                .collect::<Result<_, _>>()?
        }
        _ => Vec::new(),
    };

    let mut models = BTreeMap::new();
    for fs in config.feature_specs() {
        let x: FeatureMatrix<f64> = materialize(&fs, &blocks)?;
        for (i, spec) in specs.iter().enumerate() {
            let y = match task {
                EvalTask::IntervalClassification => Targets::Classification(&y_cls),
                _ => Targets::Regression(&y_reg),
            };
            let model = fit(spec, &x, y)?;
            models.insert(format!("{}_{:02}_{}", fs.name, i, spec.family), model);
        }
    }
    Ok((engineer, models))
}
