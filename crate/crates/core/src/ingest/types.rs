use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// One APC process run. Sensor entries that are absent or `null` mean the
/// parameter was not used in that run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    #[serde(rename = "chamber")]
    pub chamber_id: String,
    #[serde(rename = "run")]
    pub run_id: String,
    #[serde(rename = "recipe")]
    pub recipe_id: String,
    /// Start time in hours since the log epoch.
    pub start: f64,
    /// Duration in hours.
    pub duration: f64,
    pub sensors: BTreeMap<String, Option<f64>>,
}

impl Run {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn sensor(&self, name: &str) -> Option<f64> {
        self.sensors.get(name).copied().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmCategory {
    Warning,
    Information,
    Critical,
    Error,
    Other,
}

impl AlarmCategory {
    pub const ALL: [AlarmCategory; 5] = [
        AlarmCategory::Warning,
        AlarmCategory::Information,
        AlarmCategory::Critical,
        AlarmCategory::Error,
        AlarmCategory::Other,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    #[serde(rename = "chamber")]
    pub chamber_id: String,
    pub time: f64,
    pub code: String,
    pub category: AlarmCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationSeverity {
    Error,
    Information,
}

/// Breach of an expert-defined upper or lower limit on an APC parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitViolationEvent {
    #[serde(rename = "chamber")]
    pub chamber_id: String,
    pub time: f64,
    pub code: String,
    pub severity: ViolationSeverity,
    pub sensor: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChamberState {
    Standby,
    Productive,
    Breakdown,
    Maintenance,
}

impl fmt::Display for ChamberState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChamberState::Standby => "standby",
            ChamberState::Productive => "productive",
            ChamberState::Breakdown => "breakdown",
            ChamberState::Maintenance => "maintenance",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    #[serde(rename = "chamber")]
    pub chamber_id: String,
    pub time: f64,
    pub state: ChamberState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageDip {
    #[serde(rename = "chamber")]
    pub chamber_id: String,
    pub time: f64,
    /// Voltage reduction in volts.
    pub magnitude: f64,
}

/// Timestamped event attached to a chamber. Lets the feature code treat alarms and
/// violations uniformly.
pub trait ChamberEvent {
    fn chamber(&self) -> &str;
    fn time(&self) -> f64;
}

/// Events that carry an identifying code.
pub trait CodedEvent: ChamberEvent {
    fn code(&self) -> &str;
}

macro_rules! chamber_event {
    ($t:ty) => {
        impl ChamberEvent for $t {
            fn chamber(&self) -> &str {
                &self.chamber_id
            }
            fn time(&self) -> f64 {
                self.time
            }
        }
    };
}

chamber_event!(AlarmEvent);
chamber_event!(LimitViolationEvent);
chamber_event!(StateChange);
chamber_event!(VoltageDip);

impl CodedEvent for AlarmEvent {
    fn code(&self) -> &str {
        &self.code
    }
}

impl CodedEvent for LimitViolationEvent {
    fn code(&self) -> &str {
        &self.code
    }
}

/// All raw streams for one or more chambers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub runs: Vec<Run>,
    pub alarms: Vec<AlarmEvent>,
    pub violations: Vec<LimitViolationEvent>,
    pub states: Vec<StateChange>,
    pub dips: Vec<VoltageDip>,
}

impl EventLog {
    /// Sorts every stream by (chamber, time). Runs sort by start.
    pub fn normalize(&mut self) {
        self.runs.sort_by(|a, b| {
            a.chamber_id
                .cmp(&b.chamber_id)
                .then(a.start.total_cmp(&b.start))
        });
        sort_events(&mut self.alarms);
        sort_events(&mut self.violations);
        sort_events(&mut self.states);
        sort_events(&mut self.dips);
    }

    /// Chamber ids in sorted order.
    pub fn chambers(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .runs
            .iter()
            .map(|r| r.chamber_id.clone())
            .chain(self.states.iter().map(|s| s.chamber_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Every sensor name mentioned by any run, sorted.
    pub fn sensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .runs
            .iter()
            .flat_map(|r| r.sensors.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Violation code → sensor whose limit it guards.
    pub fn limit_map(&self) -> BTreeMap<String, String> {
        self.violations
            .iter()
            .map(|v| (v.code.clone(), v.sensor.clone()))
            .collect()
    }
}

pub(crate) fn sort_events<E: ChamberEvent>(events: &mut [E]) {
    events.sort_by(|a, b| {
        a.chamber()
            .cmp(b.chamber())
            .then(a.time().total_cmp(&b.time()))
    });
}
