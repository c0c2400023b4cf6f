//! Raw event streams: JSONL parsing, serialization, validation and recipe filtering.
//!
//! A log directory holds one JSONL file per stream:
//!
//! | file               | required | record                                   |
//! |--------------------|----------|------------------------------------------|
//! | `runs.jsonl`       | yes      | [`Run`]                                  |
//! | `alarms.jsonl`     | yes      | [`AlarmEvent`]                           |
//! | `violations.jsonl` | yes      | [`LimitViolationEvent`]                  |
//! | `states.jsonl`     | yes      | [`StateChange`]                          |
//! | `dips.jsonl`       | no       | [`VoltageDip`]                           |
//!
//! Timestamps are real-valued hours. Unknown JSON fields are ignored.

mod parse;
mod types;
mod validate;

use std::collections::BTreeSet;
use std::path::PathBuf;

use thiserror::Error;

pub use parse::{parse_event_log, parse_stream, write_event_log, write_stream, STREAM_FILES};
pub use types::{
    AlarmCategory, AlarmEvent, ChamberEvent, ChamberState, CodedEvent, EventLog,
    LimitViolationEvent, Run, StateChange, ViolationSeverity, VoltageDip,
};
pub use validate::{validate, ValidationIssue};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}:{line}: malformed record: {reason}")]
    MalformedRecord {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("required stream file missing: {0}")]
    MissingFile(PathBuf),
    #[error("duplicate run id {0}")]
    DuplicateRunId(String),
    #[error("no run survives the recipe filter")]
    EmptyResult,
    #[error("recipe filter set is empty")]
    EmptyRecipeSet,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Keeps only runs whose recipe is listed. Events are left untouched.
pub fn filter_recipes(
    log: &EventLog,
    productive_recipes: &BTreeSet<String>,
) -> Result<EventLog, IngestError> {
    if productive_recipes.is_empty() {
        return Err(IngestError::EmptyRecipeSet);
    }
    let runs: Vec<Run> = log
        .runs
        .iter()
        .filter(|r| productive_recipes.contains(&r.recipe_id))
        .cloned()
        .collect();
    if runs.is_empty() {
        return Err(IngestError::EmptyResult);
    }
    Ok(EventLog {
        runs,
        ..log.clone()
    })
}
