use std::collections::BTreeMap;

use etchforge::ingest::{ChamberState, EventLog, Run, StateChange};
use etchforge::labeling::*;
use etchforge::sim::{simulate, SimConfig};
use proptest::prelude::*;

fn run(chamber: &str, id: usize, start: f64, duration: f64) -> Run {
    Run {
        chamber_id: chamber.into(),
        run_id: format!("{chamber}-r{id}"),
        recipe_id: "R1".into(),
        start,
        duration,
        sensors: BTreeMap::new(),
    }
}

fn breakdown(chamber: &str, time: f64) -> StateChange {
    StateChange {
        chamber_id: chamber.into(),
        time,
        state: ChamberState::Breakdown,
    }
}

/// One complete segment: breakdown at 0, back-to-back runs, breakdown after the last run.
fn segment_log(durations: &[f64]) -> EventLog {
    let mut log = EventLog::default();
    let mut t = 0.5;
    for (i, &d) in durations.iter().enumerate() {
        log.runs.push(run("C1", i, t, d));
        t += d;
    }
    log.states = vec![breakdown("C1", 0.0), breakdown("C1", t + 0.25)];
    log
}

fn brute_ttf(durations: &[f64]) -> Vec<f64> {
    (0..durations.len())
        .map(|i| durations[i + 1..].iter().rev().fold(0.0, |acc, d| acc + d))
        .collect()
}

fn ttf_by_run(log: &EventLog) -> Vec<Option<f64>> {
    let segs = segment_chambers(log);
    let mut out = vec![None; log.runs.len()];
    for l in compute_ttf(log, &segs) {
        out[l.run] = l.ttf;
    }
    out
}

#[test]
fn hand_worked_segment() {
    let log = segment_log(&[2.0, 3.0, 1.5, 4.0]);
    let ttf: Vec<f64> = ttf_by_run(&log).into_iter().map(Option::unwrap).collect();
    assert_eq!(ttf, [8.5, 5.5, 4.0, 0.0]);
    let segs = segment_chambers(&log);
    let complete: Vec<_> = segs.iter().filter(|s| s.is_complete()).collect();
    assert_eq!(complete.len(), 1);
    assert_eq!(complete[0].total_productive_hours, 10.5);
    assert_eq!(complete[0].segment_id, "C1:001");
}

#[test]
fn leading_and_trailing_segments_are_censored() {
    let mut log = EventLog::default();
    log.runs = vec![
        run("C1", 0, 0.0, 1.0),
        run("C1", 1, 2.0, 1.0),
        run("C1", 2, 4.0, 1.0),
        run("C1", 3, 6.0, 1.0),
    ];
    log.states = vec![breakdown("C1", 1.5), breakdown("C1", 5.5)];
    let segs = segment_chambers(&log);
    let kinds: Vec<_> = segs.iter().map(|s| s.kind).collect();
    assert_eq!(
        kinds,
        [SegmentKind::Leading, SegmentKind::Complete, SegmentKind::Trailing]
    );
    let labeled = compute_health(&compute_ttf(&log, &segs));
    let by_run: BTreeMap<usize, &LabeledRun> = labeled.iter().map(|l| (l.run, l)).collect();
    assert!(by_run[&0].censored && by_run[&0].ttf == Some(0.0) && by_run[&0].health.is_none());
    assert!(!by_run[&1].censored && by_run[&1].ttf == Some(1.0));
    assert_eq!(by_run[&1].health, Some(1.0));
    assert_eq!(by_run[&2].health, Some(0.0));
    assert!(by_run[&3].censored && by_run[&3].ttf.is_none());
}

#[test]
fn interval_labels_follow_bounds() {
    let log = segment_log(&[10.0, 10.0, 10.0]);
    let segs = segment_chambers(&log);
    let labeled = compute_interval_labels(&compute_ttf(&log, &segs), &[8.0, 16.0, 24.0]).unwrap();
    let first = labeled.iter().find(|l| l.run == 0).unwrap();
    assert_eq!(first.ttf, Some(20.0));
    assert_eq!(
        first.interval_labels,
        BTreeMap::from([("8".into(), false), ("16".into(), false), ("24".into(), true)])
    );
    assert_eq!(
        compute_interval_labels(&labeled, &[8.0, 8.0]),
        Err(LabelError::InvalidBounds)
    );
    assert_eq!(compute_interval_labels(&labeled, &[-1.0]), Err(LabelError::InvalidBounds));
}

#[test]
fn zero_min_hours_keeps_everything() {
    let log = simulate(&SimConfig {
        n_chambers: 2,
        horizon_hours: 2000.0,
        mean_segment_hours: 200.0,
        ..SimConfig::default()
    })
    .unwrap();
    let segs = segment_chambers(&log);
    let labeled = compute_ttf(&log, &segs);
    let (kept_runs, kept_segs, report) = clean_short_segments(&labeled, &segs, 0.0).unwrap();
    assert_eq!(kept_runs, labeled);
    assert_eq!(kept_segs, segs);
    assert!(report.removed.is_empty());
    assert_eq!(
        clean_short_segments(&labeled, &segs, -1.0).unwrap_err(),
        LabelError::InvalidMinHours
    );
}

#[test]
fn short_segment_removal_fraction_is_small() {
    let (mut removed, mut total) = (0, 0);
    for seed in 0..20 {
        let log = simulate(&SimConfig { seed, ..SimConfig::default() }).unwrap();
        let (labeled, segs, report) = label_log(&log, &DEFAULT_INTERVAL_BOUNDS, 5.0).unwrap();
        removed += report.removed.len();
        total += report.complete_before;
        assert_eq!(report.complete_after + report.removed.len(), report.complete_before);
        for s in segs.iter().filter(|s| s.is_complete()) {
            assert!(s.total_productive_hours >= 5.0);
        }
        let gone: Vec<&str> = report.removed.iter().map(|r| r.segment_id.as_str()).collect();
        assert!(labeled.iter().all(|l| !gone.contains(&l.segment_id.as_str())));
    }
    let frac = removed as f64 / total as f64;
    assert!((0.01..=0.15).contains(&frac), "removed fraction {frac}");
}

fn durations() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..20.0, 1..40)
}

proptest! {
    #[test]
    fn ttf_matches_brute_force(d in durations()) {
        let ttf: Vec<f64> = ttf_by_run(&segment_log(&d)).into_iter().map(Option::unwrap).collect();
        prop_assert_eq!(ttf, brute_ttf(&d));
    }

    #[test]
    fn ttf_recurrence_is_exact(d in durations()) {
        let ttf: Vec<f64> = ttf_by_run(&segment_log(&d)).into_iter().map(Option::unwrap).collect();
        prop_assert_eq!(*ttf.last().unwrap(), 0.0);
        for i in 0..d.len() - 1 {
            prop_assert_eq!(ttf[i].to_bits(), (ttf[i + 1] + d[i + 1]).to_bits());
        }
    }

    #[test]
    fn inserting_a_run_never_decreases_earlier_ttf(d in durations(), at in 0usize..40, extra in 0.05f64..20.0) {
        let at = at % (d.len() + 1);
        let mut longer = d.clone();
        longer.insert(at, extra);
        let before: Vec<f64> = ttf_by_run(&segment_log(&d)).into_iter().map(Option::unwrap).collect();
        let after: Vec<f64> = ttf_by_run(&segment_log(&longer)).into_iter().map(Option::unwrap).collect();
        for i in 0..at {
            prop_assert!(after[i] >= before[i]);
        }
    }

    #[test]
    fn health_is_bounded_and_non_increasing(d in durations()) {
        let log = segment_log(&d);
        let segs = segment_chambers(&log);
        let mut labeled = compute_health(&compute_ttf(&log, &segs));
        labeled.sort_by_key(|l| l.run);
        let h: Vec<f64> = labeled.iter().map(|l| l.health.unwrap()).collect();
        prop_assert!(h.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert_eq!(*h.last().unwrap(), 0.0);
        for w in h.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn interval_labels_are_monotone_in_bound(d in durations()) {
        let log = segment_log(&d);
        let segs = segment_chambers(&log);
        let labeled = compute_interval_labels(&compute_ttf(&log, &segs), &DEFAULT_INTERVAL_BOUNDS).unwrap();
        for l in &labeled {
            let flags: Vec<bool> = DEFAULT_INTERVAL_BOUNDS.iter().map(|&b| l.interval_labels[&bound_key(b)]).collect();
            for w in flags.windows(2) {
                prop_assert!(!w[0] || w[1]);
            }
        }
    }
}
