use std::collections::BTreeSet;

use serde::Serialize;

use super::types::{ChamberEvent, ChamberState, EventLog};

/// A data-quality finding. Findings never abort processing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ValidationIssue {
    OverlappingRuns {
        chamber: String,
        first: String,
        second: String,
    },
    RepeatedState {
        chamber: String,
        time: f64,
        state: ChamberState,
    },
    BreakdownWithoutProductive {
        chamber: String,
        time: f64,
    },
    OutOfOrder {
        stream: String,
        chamber: String,
        time: f64,
    },
    NonIncreasingStateTime {
        chamber: String,
        time: f64,
    },
    UnknownChamber {
        stream: String,
        chamber: String,
    },
}

fn out_of_order<E: ChamberEvent>(stream: &str, events: &[E], issues: &mut Vec<ValidationIssue>) {
    for w in events.windows(2) {
        if w[0].chamber() == w[1].chamber() && w[1].time() < w[0].time()
            || w[1].chamber() < w[0].chamber()
        {
            issues.push(ValidationIssue::OutOfOrder {
                stream: stream.into(),
                chamber: w[1].chamber().into(),
                time: w[1].time(),
            });
        }
    }
}

fn unknown_chambers<E: ChamberEvent>(
    stream: &str,
    events: &[E],
    known: &BTreeSet<&str>,
    issues: &mut Vec<ValidationIssue>,
) {
    let mut reported = BTreeSet::new();
    for e in events {
        if !known.contains(e.chamber()) && reported.insert(e.chamber().to_string()) {
            issues.push(ValidationIssue::UnknownChamber {
                stream: stream.into(),
                chamber: e.chamber().into(),
            });
        }
    }
}

/// Inspects a parsed log and reports every invariant violation found. An empty
/// result means the log is clean. The log is not modified.
pub fn validate(log: &EventLog) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();

    for w in log.runs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.chamber_id != b.chamber_id {
            if b.chamber_id < a.chamber_id {
                issues.push(ValidationIssue::OutOfOrder {
                    stream: "runs".into(),
                    chamber: b.chamber_id.clone(),
                    time: b.start,
                });
            }
            continue;
        }
        if b.start < a.start {
            issues.push(ValidationIssue::OutOfOrder {
                stream: "runs".into(),
                chamber: b.chamber_id.clone(),
                time: b.start,
            });
        } else if b.start < a.end() {
            issues.push(ValidationIssue::OverlappingRuns {
                chamber: a.chamber_id.clone(),
                first: a.run_id.clone(),
                second: b.run_id.clone(),
            });
        }
    }

    out_of_order("alarms", &log.alarms, &mut issues);
    out_of_order("violations", &log.violations, &mut issues);
    out_of_order("states", &log.states, &mut issues);
    out_of_order("dips", &log.dips, &mut issues);

    let mut productive_since_breakdown = false;
    for (i, s) in log.states.iter().enumerate() {
        let prev = i
            .checked_sub(1)
            .map(|j| &log.states[j])
            .filter(|p| p.chamber_id == s.chamber_id);
        match prev {
            None => productive_since_breakdown = false,
            Some(p) => {
                if p.state == s.state {
                    issues.push(ValidationIssue::RepeatedState {
                        chamber: s.chamber_id.clone(),
                        time: s.time,
                        state: s.state,
                    });
                }
                if s.time <= p.time {
                    issues.push(ValidationIssue::NonIncreasingStateTime {
                        chamber: s.chamber_id.clone(),
                        time: s.time,
                    });
                }
            }
        }
        match s.state {
            ChamberState::Productive => productive_since_breakdown = true,
            ChamberState::Breakdown => {
                if !productive_since_breakdown {
                    issues.push(ValidationIssue::BreakdownWithoutProductive {
                        chamber: s.chamber_id.clone(),
                        time: s.time,
                    });
                }
                productive_since_breakdown = false;
            }
            _ => {}
        }
    }

    let known: BTreeSet<&str> = log
        .runs
        .iter()
        .map(|r| r.chamber_id.as_str())
        .chain(log.states.iter().map(|s| s.chamber_id.as_str()))
        .collect();
    unknown_chambers("alarms", &log.alarms, &known, &mut issues);
    unknown_chambers("violations", &log.violations, &known, &mut issues);
    unknown_chambers("dips", &log.dips, &known, &mut issues);

    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Run, StateChange};

    fn run(id: &str, start: f64, duration: f64) -> Run {
        Run {
            chamber_id: "C1".into(),
            run_id: id.into(),
            recipe_id: "A".into(),
            start,
            duration,
            sensors: Default::default(),
        }
    }

    fn state(time: f64, state: ChamberState) -> StateChange {
        StateChange {
            chamber_id: "C1".into(),
            time,
            state,
        }
    }

    #[test]
    fn overlapping_runs_reported_once() {
        let log = EventLog {
            runs: vec![run("r1", 0.0, 2.0), run("r2", 1.5, 1.0)],
            ..Default::default()
        };
        assert_eq!(
            validate(&log),
            vec![ValidationIssue::OverlappingRuns {
                chamber: "C1".into(),
                first: "r1".into(),
                second: "r2".into()
            }]
        );
    }

    #[test]
    fn touching_runs_do_not_overlap() {
        let log = EventLog {
            runs: vec![run("r1", 0.0, 2.0), run("r2", 2.0, 1.0)],
            ..Default::default()
        };
        assert!(validate(&log).is_empty());
    }

    #[test]
    fn repeated_state_is_reported() {
        let log = EventLog {
            states: vec![
                state(0.0, ChamberState::Productive),
                state(1.0, ChamberState::Productive),
            ],
            ..Default::default()
        };
        let issues = validate(&log);
        assert_eq!(issues.len(), 1);
        assert!(matches!(issues[0], ValidationIssue::RepeatedState { .. }));
    }

    #[test]
    fn breakdown_needs_productive_state_first() {
        let log = EventLog {
            states: vec![
                state(0.0, ChamberState::Standby),
                state(1.0, ChamberState::Breakdown),
            ],
            ..Default::default()
        };
        assert!(matches!(
            validate(&log)[..],
            [ValidationIssue::BreakdownWithoutProductive { .. }]
        ));
    }
}
