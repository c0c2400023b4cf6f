use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::{AlarmEvent, EventLog, LimitViolationEvent, Run, StateChange, VoltageDip};
use super::IngestError;

/// File names in stream order: runs, alarms, violations, states, dips.
pub const STREAM_FILES: [&str; 5] = [
    "runs.jsonl",
    "alarms.jsonl",
    "violations.jsonl",
    "states.jsonl",
    "dips.jsonl",
];

/// Parses one JSONL stream. Blank lines are skipped; every other line must hold
/// exactly one record. Line numbers in errors are 1-based.
pub fn parse_stream<T: DeserializeOwned>(file: &str, text: &str) -> Result<Vec<T>, IngestError> {
    parse_checked(file, text, |_: &T| None)
}

fn parse_checked<T: DeserializeOwned>(
    file: &str,
    text: &str,
    check: impl Fn(&T) -> Option<String>,
) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| IngestError::MalformedRecord {
            file: file.to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if let Some(reason) = check(&rec) {
            return Err(IngestError::MalformedRecord {
                file: file.to_string(),
                line: i + 1,
                reason,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn read_stream<T: DeserializeOwned>(
    dir: &Path,
    file: &str,
    required: bool,
    check: impl Fn(&T) -> Option<String>,
) -> Result<Vec<T>, IngestError> {
    let path = dir.join(file);
    if !path.exists() {
        return if required {
            Err(IngestError::MissingFile(path))
        } else {
            Ok(Vec::new())
        };
    }
    let text = fs::read_to_string(&path).map_err(|source| IngestError::Io {
        path: path.clone(),
        source,
    })?;
    parse_checked(file, &text, check)
}

fn finite_time(t: f64) -> Option<String> {
    (!t.is_finite()).then(|| format!("non-finite time {t}"))
}

/// Reads and validates the streams in `dir`, then normalizes sort order.
pub fn parse_event_log(dir: &Path) -> Result<EventLog, IngestError> {
    let runs: Vec<Run> = read_stream(dir, STREAM_FILES[0], true, |r: &Run| {
        if !(r.duration > 0.0) || !r.duration.is_finite() {
            Some(format!("duration must be positive, got {}", r.duration))
        } else if let Some(bad) = r.sensors.values().flatten().find(|v| !v.is_finite()) {
            Some(format!("non-finite sensor value {bad}"))
        } else {
            finite_time(r.start)
        }
    })?;
    let alarms: Vec<AlarmEvent> =
        read_stream(dir, STREAM_FILES[1], true, |a: &AlarmEvent| finite_time(a.time))?;
    let violations: Vec<LimitViolationEvent> =
        read_stream(dir, STREAM_FILES[2], true, |v: &LimitViolationEvent| {
            finite_time(v.time)
        })?;
    let states: Vec<StateChange> =
        read_stream(dir, STREAM_FILES[3], true, |s: &StateChange| finite_time(s.time))?;
    let dips: Vec<VoltageDip> = read_stream(dir, STREAM_FILES[4], false, |d: &VoltageDip| {
        if !(d.magnitude > 0.0) {
            Some(format!("dip magnitude must be positive, got {}", d.magnitude))
        } else {
            finite_time(d.time)
        }
    })?;

    let mut seen = HashSet::new();
    for r in &runs {
        if !seen.insert(r.run_id.as_str()) {
            return Err(IngestError::DuplicateRunId(r.run_id.clone()));
        }
    }

    let mut log = EventLog {
        runs,
        alarms,
        violations,
        states,
        dips,
    };
    log.normalize();
    Ok(log)
}

pub fn write_stream<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes all five streams into `dir` (created if needed).
pub fn write_event_log(log: &EventLog, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_stream(&dir.join(STREAM_FILES[0]), &log.runs)?;
    write_stream(&dir.join(STREAM_FILES[1]), &log.alarms)?;
    write_stream(&dir.join(STREAM_FILES[2]), &log.violations)?;
    write_stream(&dir.join(STREAM_FILES[3]), &log.states)?;
    write_stream(&dir.join(STREAM_FILES[4]), &log.dips)?;
    Ok(())
}
