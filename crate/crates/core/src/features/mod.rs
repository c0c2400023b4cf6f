//! Engineered feature groups and the FS1–FS7 feature-set combinations.
//!
//! | group   | content                                                         |
//! |---------|-----------------------------------------------------------------|
//! | `APC_V` | standardized, pruned sensors that have a limit defined          |
//! | `APC_R` | recipe mix of the trailing window and recipe switch count       |
//! | `LV_P`  | limit-violation counters weighted by penalty, with gradients    |
//! | `AL_P`  | alarm counters weighted by penalty, with gradients              |
//! | `DIPS`  | voltage-dip count and peak magnitude in the trailing window     |
//!
//! All values for a run use only information up to that run's end.

mod blocks;
mod penalty;
mod timeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventLog;
use crate::labeling::{LabeledRun, Segment};
use crate::linalg::DenseMatrix;
use crate::preprocess::{PreprocessError, SensorPreprocessor};
use crate::scalar::Scalar;

pub use blocks::{
    apcv_columns, apcv_features, counter_features, dip_features, recipe_mix_features,
    span_counters, CounterRow, OTHER_RECIPE,
};
pub use penalty::{
    fit_penalties, median, penalty_table_from_ttfs, CodePenalty, EventSource, Penalties,
    PenaltyLookup, PenaltyTable, DEFAULT_EPSILON_HOURS,
};
pub use timeline::{chamber_slice, SegmentSpan, Timeline};

pub const DEFAULT_WINDOW_RUNS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("no kept sensor has a limit definition")]
    EmptySelection,
    #[error("unknown feature set {0:?} (expected FS1..FS7)")]
    UnknownFeatureSet(String),
    #[error("run index {0} is not part of any segment")]
    UnknownRun(usize),
    #[error("window_runs must be at least 1")]
    InvalidWindow,
    #[error("no training runs to fit features on")]
    NoTrainingRuns,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("feature matrix contains non-finite values in column {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "APC_V")]
    ApcV,
    #[serde(rename = "APC_R")]
    ApcR,
    #[serde(rename = "LV_P")]
    LvP,
    #[serde(rename = "AL_P")]
    AlP,
    #[serde(rename = "DIPS")]
    Dips,
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureGroup::ApcV => "APC_V",
            FeatureGroup::ApcR => "APC_R",
            FeatureGroup::LvP => "LV_P",
            FeatureGroup::AlP => "AL_P",
            FeatureGroup::Dips => "DIPS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSetName {
    FS1,
    FS2,
    FS3,
    FS4,
    FS5,
    FS6,
    FS7,
}

impl FeatureSetName {
    pub const ALL: [FeatureSetName; 7] = [
        FeatureSetName::FS1,
        FeatureSetName::FS2,
        FeatureSetName::FS3,
        FeatureSetName::FS4,
        FeatureSetName::FS5,
        FeatureSetName::FS6,
        FeatureSetName::FS7,
    ];

    pub fn groups(self) -> &'static [FeatureGroup] {
        use FeatureGroup::*;
        match self {
            FeatureSetName::FS1 => &[ApcV, ApcR],
            FeatureSetName::FS2 => &[ApcV, LvP],
            FeatureSetName::FS3 => &[ApcV, ApcR, LvP, AlP],
            FeatureSetName::FS4 => &[ApcV, ApcR, LvP, AlP, Dips],
            FeatureSetName::FS5 => &[ApcV, LvP, AlP],
            FeatureSetName::FS6 => &[LvP, AlP],
            FeatureSetName::FS7 => &[AlP],
        }
    }
}

impl fmt::Display for FeatureSetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FeatureSetName {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FeatureError::UnknownFeatureSet(s.to_string()))
    }
}

/// Which groups to materialize and the trailing window length they use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: FeatureSetName,
    pub groups: Vec<FeatureGroup>,
    pub window_runs: usize,
}

impl FeatureSpec {
    pub fn new(name: FeatureSetName, window_runs: usize) -> Self {
        Self {
            name,
            groups: name.groups().to_vec(),
            window_runs,
        }
    }

    pub fn parse(name: &str, window_runs: usize) -> Result<Self, FeatureError> {
        Ok(Self::new(name.parse()?, window_runs))
    }
}

/// Columns of one feature group for a list of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub group: FeatureGroup,
    pub names: Vec<String>,
    pub data: DenseMatrix<f64>,
}

/// Model input: one row per labeled run, named columns, group provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FeatureMatrix<F: Scalar> {
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub data: DenseMatrix<F>,
}

impl<F: Scalar> FeatureMatrix<F> {
    /// Unnamed matrix with columns `x0, x1, ...`; handy for direct model use.
    pub fn from_matrix(data: DenseMatrix<F>) -> Self {
        let names = (0..data.ncols()).map(|i| format!("x{i}")).collect();
        let groups = vec![FeatureGroup::ApcV; data.ncols()];
        Self {
            names,
            groups,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn provenance(&self) -> BTreeMap<String, FeatureGroup> {
        self.names.iter().cloned().zip(self.groups.iter().copied()).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            groups: self.groups.clone(),
            data: self.data.select_rows(idx),
        }
    }

    /// CSV text with a header row; values use the shortest round-trip form.
    pub fn to_csv(&self, row_ids: Option<&[String]>) -> String {
        let mut out = String::new();
        if row_ids.is_some() {
            out.push_str("run_id,");
        }
        out.push_str(&self.names.join(","));
        out.push('\n');
        for r in 0..self.nrows() {
            if let Some(ids) = row_ids {
                out.push_str(&ids[r]);
                out.push(',');
            }
            let vals: Vec<String> = self.data.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        out
    }
}

/// Every group computed for the same rows; feature sets pick from these.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlocks {
    pub apc_v: Result<FeatureBlock, FeatureError>,
    pub apc_r: FeatureBlock,
    pub lv_p: FeatureBlock,
    pub al_p: FeatureBlock,
    pub dips: FeatureBlock,
}

impl FeatureBlocks {
    fn block(&self, g: FeatureGroup) -> Result<&FeatureBlock, FeatureError> {
        match g {
            FeatureGroup::ApcV => self.apc_v.as_ref().map_err(Clone::clone),
            FeatureGroup::ApcR => Ok(&self.apc_r),
            FeatureGroup::LvP => Ok(&self.lv_p),
            FeatureGroup::AlP => Ok(&self.al_p),
            FeatureGroup::Dips => Ok(&self.dips),
        }
    }
}

impl Clone for FeatureError {
    fn clone(&self) -> Self {
        match self {
            FeatureError::EmptySelection => FeatureError::EmptySelection,
            FeatureError::UnknownFeatureSet(s) => FeatureError::UnknownFeatureSet(s.clone()),
            FeatureError::UnknownRun(r) => FeatureError::UnknownRun(*r),
            FeatureError::InvalidWindow => FeatureError::InvalidWindow,
            FeatureError::NoTrainingRuns => FeatureError::NoTrainingRuns,
            FeatureError::Preprocess(e) => FeatureError::Preprocess(e.clone()),
            FeatureError::NonFinite(c) => FeatureError::NonFinite(c.clone()),
        }
    }
}

/// Concatenates the spec's groups in spec order.
pub fn materialize<F: Scalar>(
    spec: &FeatureSpec,
    blocks: &FeatureBlocks,
) -> Result<FeatureMatrix<F>, FeatureError> {
    let parts: Vec<&FeatureBlock> = spec
        .groups
        .iter()
        .map(|&g| blocks.block(g))
        .collect::<Result<_, _>>()?;
    let mats: Vec<&DenseMatrix<f64>> = parts.iter().map(|b| &b.data).collect();
    let data = DenseMatrix::hstack(&mats);
    let mut names = Vec::new();
    let mut groups = Vec::new();
    for b in &parts {
        names.extend(b.names.iter().cloned());
        groups.extend(std::iter::repeat(b.group).take(b.names.len()));
    }
    for c in 0..data.ncols() {
        if (0..data.nrows()).any(|r| !data.get(r, c).is_finite()) {
            return Err(FeatureError::NonFinite(names[c].clone()));
        }
    }
    Ok(FeatureMatrix {
        names,
        groups,
        data: data.cast(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub window_runs: usize,
    pub epsilon_hours: f64,
    /// Fit one penalty table across chambers (true) or one per chamber.
    pub pooled_penalties: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_runs: DEFAULT_WINDOW_RUNS,
            epsilon_hours: DEFAULT_EPSILON_HOURS,
            pooled_penalties: true,
        }
    }
}

/// All feature state fitted on training runs: sensor standardization and
/// pruning, alarm and violation penalties, and the known recipe list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEngineer {
    pub config: FeatureConfig,
    pub sensors: SensorPreprocessor,
    pub alarm_penalties: Penalties,
    pub violation_penalties: Penalties,
    pub recipes: Vec<String>,
    pub limit_map: BTreeMap<String, String>,
}

impl FeatureEngineer {
    /// Fits on the runs in `train` (which must carry TTF labels for penalties).
    pub fn fit(
        log: &EventLog,
        timeline: &Timeline,
        train: &[&LabeledRun],
        config: &FeatureConfig,
        correlation_threshold: f64,
    ) -> Result<Self, FeatureError> {
        if config.window_runs == 0 {
            return Err(FeatureError::InvalidWindow);
        }
        if train.is_empty() {
            return Err(FeatureError::NoTrainingRuns);
        }
        let train_runs = train.iter().map(|l| &log.runs[l.run]);
        let sensors = SensorPreprocessor::fit(train_runs.clone(), correlation_threshold)?;
        let ttf_by_run: BTreeMap<usize, f64> = train
            .iter()
            .filter_map(|l| l.ttf.map(|t| (l.run, t)))
            .collect();
        let alarm_penalties = Penalties::fit(
            &log.alarms,
            EventSource::Alarm,
            timeline,
            &ttf_by_run,
            config.epsilon_hours,
            config.pooled_penalties,
        );
        let violation_penalties = Penalties::fit(
            &log.violations,
            EventSource::Violation,
            timeline,
            &ttf_by_run,
            config.epsilon_hours,
            config.pooled_penalties,
        );
        let recipes: BTreeSet<String> = train_runs.map(|r| r.recipe_id.clone()).collect();
        Ok(Self {
            config: config.clone(),
            sensors,
            alarm_penalties,
            violation_penalties,
            recipes: recipes.into_iter().collect(),
            limit_map: log.limit_map(),
        })
    }

    /// Computes every group for the given run indices.
    pub fn blocks(
        &self,
        log: &EventLog,
        timeline: &Timeline,
        rows: &[usize],
    ) -> Result<FeatureBlocks, FeatureError> {
        let w = self.config.window_runs;
        let sensor_matrix: DenseMatrix<f64> = self
            .sensors
            .transform(rows.iter().map(|&r| &log.runs[r]))?;
        let apc_v = apcv_features(&sensor_matrix, &self.sensors.prune, &self.limit_map);
        Ok(FeatureBlocks {
            apc_v,
            apc_r: recipe_mix_features(&log.runs, timeline, &self.recipes, w, rows)?,
            lv_p: counter_features(
                FeatureGroup::LvP,
                "lv",
                &log.violations,
                &log.runs,
                timeline,
                &self.violation_penalties,
                w,
                rows,
            )?,
            al_p: counter_features(
                FeatureGroup::AlP,
                "al",
                &log.alarms,
                &log.runs,
                timeline,
                &self.alarm_penalties,
                w,
                rows,
            )?,
            dips: dip_features(&log.dips, &log.runs, timeline, w, rows)?,
        })
    }
}

/// Segments kept for feature computation, as a timeline.
pub fn timeline_for(log: &EventLog, segments: &[Segment]) -> Timeline {
    Timeline::new(&log.runs, segments)
}
