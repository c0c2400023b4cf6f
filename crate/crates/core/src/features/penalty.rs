use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::timeline::Timeline;
use crate::ingest::CodedEvent;

pub const DEFAULT_EPSILON_HOURS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventSource {
    Alarm,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodePenalty {
    pub code: String,
    pub occurrences: usize,
    pub median_ttf: f64,
    pub penalty: f64,
}

/// Per-code penalty `1 / max(median TTF, ε)` fitted from training events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTable {
    pub source: EventSource,
    pub epsilon_hours: f64,
    pub codes: BTreeMap<String, CodePenalty>,
    /// Events that could not be attached to a labeled training run.
    pub ignored_events: usize,
}

impl PenaltyTable {
    /// Penalty for `code`; codes unseen during fitting contribute 0.
    pub fn penalty(&self, code: &str) -> f64 {
        self.codes.get(code).map_or(0.0, |c| c.penalty)
    }

    /// Codes ordered by ascending median TTF (ties by code).
    pub fn ranked(&self) -> Vec<&CodePenalty> {
        let mut v: Vec<&CodePenalty> = self.codes.values().collect();
        v.sort_by(|a, b| a.median_ttf.total_cmp(&b.median_ttf).then(a.code.cmp(&b.code)));
        v
    }
}

pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Builds a penalty table from per-code TTF observations.
pub fn penalty_table_from_ttfs(
    source: EventSource,
    epsilon_hours: f64,
    ttfs: BTreeMap<String, Vec<f64>>,
    ignored_events: usize,
) -> PenaltyTable {
    let codes = ttfs
        .into_iter()
        .filter_map(|(code, mut xs)| {
            let occurrences = xs.len();
            let m = median(&mut xs)?;
            let penalty = 1.0 / m.max(epsilon_hours);
            Some((
                code.clone(),
                CodePenalty {
                    code,
                    occurrences,
                    median_ttf: m,
                    penalty,
                },
            ))
        })
        .collect();
    PenaltyTable {
        source,
        epsilon_hours,
        codes,
        ignored_events,
    }
}

/// Fits penalties: every event takes the TTF of the latest run at or before it
/// in the same segment; only runs present in `ttf_by_run` (training labels)
/// count.
pub fn fit_penalties<E: CodedEvent>(
    events: &[E],
    source: EventSource,
    timeline: &Timeline,
    ttf_by_run: &BTreeMap<usize, f64>,
    epsilon_hours: f64,
) -> PenaltyTable {
    let mut ttfs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut ignored = 0;
    for e in events {
        match timeline.attach(e).and_then(|r| ttf_by_run.get(&r)) {
            Some(&t) => ttfs.entry(e.code().to_string()).or_default().push(t),
            None => ignored += 1,
        }
    }
    penalty_table_from_ttfs(source, epsilon_hours, ttfs, ignored)
}

/// Penalty lookup used by the counter features.
pub trait PenaltyLookup {
    fn penalty(&self, chamber: &str, code: &str) -> f64;
}

impl PenaltyLookup for PenaltyTable {
    fn penalty(&self, _chamber: &str, code: &str) -> f64 {
        PenaltyTable::penalty(self, code)
    }
}

/// Penalties fitted pooled over all chambers or separately per chamber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum Penalties {
    Pooled(PenaltyTable),
    PerChamber { tables: BTreeMap<String, PenaltyTable> },
}

impl PenaltyLookup for Penalties {
    fn penalty(&self, chamber: &str, code: &str) -> f64 {
        match self {
            Penalties::Pooled(t) => t.penalty(code),
            Penalties::PerChamber { tables } => tables.get(chamber).map_or(0.0, |t| t.penalty(code)),
        }
    }
}

impl Penalties {
    pub fn fit<E: CodedEvent>(
        events: &[E],
        source: EventSource,
        timeline: &Timeline,
        ttf_by_run: &BTreeMap<usize, f64>,
        epsilon_hours: f64,
        pooled: bool,
    ) -> Self {
        if pooled {
            return Penalties::Pooled(fit_penalties(
                events,
                source,
                timeline,
                ttf_by_run,
                epsilon_hours,
            ));
        }
        let mut by_chamber: BTreeMap<&str, Vec<&E>> = BTreeMap::new();
        for e in events {
            by_chamber.entry(e.chamber()).or_default().push(e);
        }
        let tables = by_chamber
            .into_iter()
            .map(|(c, evs)| {
                let mut ttfs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                let mut ignored = 0;
                for e in evs {
                    match timeline.attach(e).and_then(|r| ttf_by_run.get(&r)) {
                        Some(&t) => ttfs.entry(e.code().to_string()).or_default().push(t),
                        None => ignored += 1,
                    }
                }
                (
                    c.to_string(),
                    penalty_table_from_ttfs(source, epsilon_hours, ttfs, ignored),
                )
            })
            .collect();
        Penalties::PerChamber { tables }
    }
}
