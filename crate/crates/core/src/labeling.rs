//! Time-to-failure ground truth reconstructed from run durations and breakdown
//! state changes.
//!
//! Runs of a chamber are partitioned at breakdowns. A segment bounded by two
//! breakdowns is *complete*; the runs before the first breakdown form a leading
//! segment whose start is unknown, and the runs after the last breakdown form a
//! trailing segment whose end is unknown. TTF is the sum of durations of all later
//! runs in the same segment, so the final run before a breakdown has TTF 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ChamberState, EventLog, Run};

/// Interval upper bounds (hours) used for breakdown-within-interval labels.
pub const DEFAULT_INTERVAL_BOUNDS: [f64; 10] =
    [8.0, 16.0, 24.0, 48.0, 72.0, 96.0, 120.0, 144.0, 168.0, 336.0];

pub const DEFAULT_MIN_SEGMENT_HOURS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("interval bounds must be positive and strictly increasing")]
    InvalidBounds,
    #[error("min_hours must be non-negative")]
    InvalidMinHours,
    #[error("no segment survives cleaning")]
    EmptyResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Runs before the first recorded breakdown; start unobserved.
    Leading,
    /// Bounded by two breakdowns.
    Complete,
    /// Runs after the last recorded breakdown; end unobserved.
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub chamber_id: String,
    pub kind: SegmentKind,
    /// Preceding breakdown time, or the first run's start for leading segments.
    pub start: f64,
    pub breakdown_time: Option<f64>,
    pub total_productive_hours: f64,
    /// Indices into `EventLog::runs`, in start order.
    pub runs: Vec<usize>,
}

impl Segment {
    pub fn is_complete(&self) -> bool {
        self.kind == SegmentKind::Complete
    }

    /// Censored segments are excluded from training and evaluation.
    pub fn is_censored(&self) -> bool {
        !self.is_complete()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    /// Index into `EventLog::runs`.
    pub run: usize,
    pub run_id: String,
    pub segment_id: String,
    /// Known whenever the segment ends in a recorded breakdown.
    pub ttf: Option<f64>,
    pub health: Option<f64>,
    /// Interval upper bound (hours, as text) → `ttf <= bound`.
    pub interval_labels: BTreeMap<String, bool>,
    pub censored: bool,
}

/// Key used for an interval bound in label maps and reports, e.g. `"8"` or `"12.5"`.
pub fn bound_key(bound: f64) -> String {
    format!("{bound}")
}

/// Partitions every chamber's runs at its breakdown state changes.
pub fn segment_chambers(log: &EventLog) -> Vec<Segment> {
    let mut by_chamber: BTreeMap<&str, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for (i, r) in log.runs.iter().enumerate() {
        by_chamber.entry(&r.chamber_id).or_default().0.push(i);
    }
    for s in &log.states {
        if s.state == ChamberState::Breakdown {
            by_chamber.entry(&s.chamber_id).or_default().1.push(s.time);
        }
    }

    let mut segments = Vec::new();
    for (chamber, (mut runs, mut breakdowns)) in by_chamber {
        runs.sort_by(|&a, &b| log.runs[a].start.total_cmp(&log.runs[b].start));
        breakdowns.sort_by(f64::total_cmp);

        // bucket 0: before first breakdown; bucket k: [b_{k-1}, b_k); last: after all.
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); breakdowns.len() + 1];
        for i in runs {
            let start = log.runs[i].start;
            let k = breakdowns.partition_point(|&b| b <= start);
            buckets[k].push(i);
        }

        for (k, bucket) in buckets.into_iter().enumerate() {
            let kind = if k == 0 {
                SegmentKind::Leading
            } else if k == breakdowns.len() {
                SegmentKind::Trailing
            } else {
                SegmentKind::Complete
            };
            if bucket.is_empty() {
                continue;
            }
            let start = if k == 0 {
                log.runs[bucket[0]].start
            } else {
                breakdowns[k - 1]
            };
            let total: f64 = bucket.iter().map(|&i| log.runs[i].duration).sum();
            segments.push(Segment {
                segment_id: format!("{chamber}:{k:03}"),
                chamber_id: chamber.to_string(),
                kind,
                start,
                breakdown_time: breakdowns.get(k).copied(),
                total_productive_hours: total,
                runs: bucket,
            });
        }
    }
    segments
}

/// TTF per run: productive hours of all later runs in the same segment.
///
/// Runs in segments without a terminating breakdown get `ttf = None`. Runs in
/// censored segments are flagged `censored` regardless.
pub fn compute_ttf(log: &EventLog, segments: &[Segment]) -> Vec<LabeledRun> {
    let mut out = Vec::with_capacity(log.runs.len());
    for seg in segments {
        // Suffix sums over start order; equal starts share the later-run sum.
        let n = seg.runs.len();
        let mut ttf = vec![0.0; n];
        let mut acc = 0.0;
        let mut j = n;
        while j > 0 {
            let start = log.runs[seg.runs[j - 1]].start;
            let mut i = j;
            while i > 0 && log.runs[seg.runs[i - 1]].start == start {
                i -= 1;
            }
            for t in &mut ttf[i..j] {
                *t = acc;
            }
            acc += seg.runs[i..j]
                .iter()
                .map(|&r| log.runs[r].duration)
                .sum::<f64>();
            j = i;
        }
        for (pos, &r) in seg.runs.iter().enumerate() {
            out.push(LabeledRun {
                run: r,
                run_id: log.runs[r].run_id.clone(),
                segment_id: seg.segment_id.clone(),
                ttf: seg.breakdown_time.map(|_| ttf[pos]),
                health: None,
                interval_labels: BTreeMap::new(),
                censored: seg.is_censored(),
            });
        }
    }
    out
}

/// Health = TTF scaled by the maximum TTF of its segment (1 = healthy,
/// 0 = breakdown). Only complete segments receive health labels.
pub fn compute_health(labeled: &[LabeledRun]) -> Vec<LabeledRun> {
    let mut max_ttf: BTreeMap<&str, f64> = BTreeMap::new();
    for l in labeled.iter().filter(|l| !l.censored) {
        if let Some(t) = l.ttf {
            let m = max_ttf.entry(&l.segment_id).or_insert(0.0);
            *m = m.max(t);
        }
    }
    labeled
        .iter()
        .map(|l| {
            let health = match (l.censored, l.ttf) {
                (false, Some(t)) => {
                    let m = max_ttf[l.segment_id.as_str()];
                    Some(if m > 0.0 { t / m } else { 0.0 })
                }
                _ => None,
            };
            LabeledRun {
                health,
                ..l.clone()
            }
        })
        .collect()
}

pub fn check_bounds(bounds: &[f64]) -> Result<(), LabelError> {
    let positive = bounds.iter().all(|&b| b > 0.0 && b.is_finite());
    let increasing = bounds.windows(2).all(|w| w[0] < w[1]);
    if positive && increasing {
        Ok(())
    } else {
        Err(LabelError::InvalidBounds)
    }
}

/// `interval_labels[x] = ttf <= x` for every bound. Runs without TTF get no labels.
pub fn compute_interval_labels(
    labeled: &[LabeledRun],
    bounds: &[f64],
) -> Result<Vec<LabeledRun>, LabelError> {
    check_bounds(bounds)?;
    Ok(labeled
        .iter()
        .map(|l| {
            let interval_labels = match l.ttf {
                Some(t) => bounds.iter().map(|&b| (bound_key(b), t <= b)).collect(),
                None => BTreeMap::new(),
            };
            LabeledRun {
                interval_labels,
                ..l.clone()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedSegment {
    pub segment_id: String,
    pub total_productive_hours: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub min_hours: f64,
    pub removed: Vec<RemovedSegment>,
    pub complete_before: usize,
    pub complete_after: usize,
}

/// Drops complete segments shorter than `min_hours` productive hours, together
/// with their runs.
pub fn clean_short_segments(
    labeled: &[LabeledRun],
    segments: &[Segment],
    min_hours: f64,
) -> Result<(Vec<LabeledRun>, Vec<Segment>, CleaningReport), LabelError> {
    if !(min_hours >= 0.0) {
        return Err(LabelError::InvalidMinHours);
    }
    let mut report = CleaningReport {
        min_hours,
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(segments.len());
    for s in segments {
        if s.is_complete() {
            report.complete_before += 1;
            if s.total_productive_hours < min_hours {
                report.removed.push(RemovedSegment {
                    segment_id: s.segment_id.clone(),
                    total_productive_hours: s.total_productive_hours,
                    runs: s.runs.len(),
                });
                continue;
            }
            report.complete_after += 1;
        }
        kept.push(s.clone());
    }
    if kept.is_empty() {
        return Err(LabelError::EmptyResult);
    }
    let removed: std::collections::BTreeSet<&str> =
        report.removed.iter().map(|r| r.segment_id.as_str()).collect();
    let labeled = labeled
        .iter()
        .filter(|l| !removed.contains(l.segment_id.as_str()))
        .cloned()
        .collect();
    Ok((labeled, kept, report))
}

/// Full labeling pass: segments, TTF, health, interval labels, then cleaning.
pub fn label_log(
    log: &EventLog,
    bounds: &[f64],
    min_segment_hours: f64,
) -> Result<(Vec<LabeledRun>, Vec<Segment>, CleaningReport), LabelError> {
    let segments = segment_chambers(log);
    let labeled = compute_ttf(log, &segments);
    let labeled = compute_health(&labeled);
    let labeled = compute_interval_labels(&labeled, bounds)?;
    clean_short_segments(&labeled, &segments, min_segment_hours)
}

/// Productive hours elapsed in the run's segment up to and including the run.
pub fn elapsed_hours(runs: &[Run], segment: &Segment) -> Vec<f64> {
    let mut acc = 0.0;
    segment
        .runs
        .iter()
        .map(|&i| {
            acc += runs[i].duration;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StateChange;

    fn run(id: usize, start: f64, duration: f64) -> Run {
        Run {
            chamber_id: "C1".into(),
            run_id: format!("r{id}"),
            recipe_id: "A".into(),
            start,
            duration,
            sensors: Default::default(),
        }
    }

    fn breakdown(time: f64) -> StateChange {
        StateChange {
            chamber_id: "C1".into(),
            time,
            state: ChamberState::Breakdown,
        }
    }

    fn log_with(durations: &[f64], breakdowns: &[f64]) -> EventLog {
        let mut t = 0.0;
        let runs = durations
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let r = run(i, t, d);
                t += d + 0.5;
                r
            })
            .collect();
        EventLog {
            runs,
            states: breakdowns.iter().map(|&b| breakdown(b)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn two_breakdowns_give_three_segments() {
        let mut runs = Vec::new();
        for i in 0..30 {
            runs.push(run(i, i as f64 * 10.0 + 1.0, 2.0));
        }
        let log = EventLog {
            runs,
            states: vec![breakdown(100.0), breakdown(250.0)],
            ..Default::default()
        };
        let segs = segment_chambers(&log);
        let kinds: Vec<_> = segs.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            [
                SegmentKind::Leading,
                SegmentKind::Complete,
                SegmentKind::Trailing
            ]
        );
        let covered: usize = segs.iter().map(|s| s.runs.len()).sum();
        assert_eq!(covered, 30);
        assert_eq!(segs[1].start, 100.0);
        assert_eq!(segs[1].breakdown_time, Some(250.0));
        assert_eq!(segs[2].breakdown_time, None);
    }

    #[test]
    fn no_breakdown_gives_one_censored_segment() {
        let log = log_with(&[1.0, 2.0, 3.0], &[]);
        let segs = segment_chambers(&log);
        assert_eq!(segs.len(), 1);
        assert!(segs[0].is_censored());
        assert_eq!(segs[0].runs.len(), 3);
        let labeled = compute_ttf(&log, &segs);
        assert!(labeled.iter().all(|l| l.censored && l.ttf.is_none()));
    }

    #[test]
    fn four_breakdowns_give_five_segments_four_terminated() {
        let mut runs = Vec::new();
        for i in 0..50 {
            runs.push(run(i, i as f64 * 10.0, 1.0));
        }
        let log = EventLog {
            runs,
            states: [95.0, 195.0, 295.0, 395.0].map(breakdown).to_vec(),
            ..Default::default()
        };
        let segs = segment_chambers(&log);
        assert_eq!(segs.len(), 5);
        assert_eq!(segs.iter().filter(|s| s.breakdown_time.is_some()).count(), 4);
        assert_eq!(segs.iter().filter(|s| s.is_complete()).count(), 3);
    }

    #[test]
    fn ttf_is_sum_of_later_durations() {
        let log = log_with(&[2.0, 3.0, 1.0, 4.0], &[7.5]);
        let segs = segment_chambers(&log);
        let labeled = compute_ttf(&log, &segs);
        let ttf: Vec<_> = labeled.iter().take(3).map(|l| l.ttf.unwrap()).collect();
        assert_eq!(ttf, [4.0, 1.0, 0.0]);
        assert!(labeled[3].ttf.is_none());
    }

    #[test]
    fn single_run_segment_has_zero_ttf_and_health() {
        let log = log_with(&[1.0, 5.0, 1.0], &[1.2, 7.0]);
        let segs = segment_chambers(&log);
        let labeled = compute_health(&compute_ttf(&log, &segs));
        let mid = labeled.iter().find(|l| l.run == 1).unwrap();
        assert_eq!(mid.ttf, Some(0.0));
        assert_eq!(mid.health, Some(0.0));
        assert!(!mid.censored);
    }

    #[test]
    fn health_scales_by_segment_max() {
        // leading [9], complete [2,3,1], trailing [1]
        let log = log_with(&[9.0, 2.0, 3.0, 1.0, 1.0], &[9.2, 17.0]);
        let segs = segment_chambers(&log);
        let labeled = compute_health(&compute_ttf(&log, &segs));
        let h: Vec<_> = labeled
            .iter()
            .filter(|l| !l.censored)
            .map(|l| l.health.unwrap())
            .collect();
        assert_eq!(h, [1.0, 0.25, 0.0]);
        assert!(labeled.iter().filter(|l| l.censored).all(|l| l.health.is_none()));
    }

    #[test]
    fn interval_labels_compare_against_bounds() {
        let l = LabeledRun {
            run: 0,
            run_id: "r".into(),
            segment_id: "s".into(),
            ttf: Some(10.0),
            health: None,
            interval_labels: BTreeMap::new(),
            censored: false,
        };
        let zero = LabeledRun {
            ttf: Some(0.0),
            ..l.clone()
        };
        let out = compute_interval_labels(&[l, zero], &[8.0, 16.0, 24.0]).unwrap();
        assert!(!out[0].interval_labels["8"]);
        assert!(out[0].interval_labels["16"]);
        assert!(out[0].interval_labels["24"]);
        assert!(out[1].interval_labels.values().all(|&v| v));
        assert_eq!(DEFAULT_INTERVAL_BOUNDS.len(), 10);
    }

    #[test]
    fn rejects_non_increasing_bounds() {
        assert_eq!(
            compute_interval_labels(&[], &[8.0, 8.0]),
            Err(LabelError::InvalidBounds)
        );
        assert_eq!(
            compute_interval_labels(&[], &[16.0, 8.0]),
            Err(LabelError::InvalidBounds)
        );
    }

    #[test]
    fn short_segments_are_cleaned() {
        // leading [1], complete 2h, complete 80h, trailing [1]
        let log = log_with(&[1.0, 2.0, 40.0, 40.0, 1.0], &[1.2, 4.0, 85.0]);
        let segs = segment_chambers(&log);
        let labeled = compute_ttf(&log, &segs);
        let (l0, s0, r0) = clean_short_segments(&labeled, &segs, 0.0).unwrap();
        assert_eq!((l0.len(), s0.len()), (labeled.len(), segs.len()));
        assert!(r0.removed.is_empty());

        let (l5, s5, r5) = clean_short_segments(&labeled, &segs, 5.0).unwrap();
        let complete: Vec<_> = s5.iter().filter(|s| s.is_complete()).collect();
        assert_eq!(complete.len(), 1);
        assert_eq!(complete[0].total_productive_hours, 80.0);
        assert_eq!(r5.removed.len(), 1);
        assert_eq!(l5.len(), labeled.len() - 1);
    }
}
