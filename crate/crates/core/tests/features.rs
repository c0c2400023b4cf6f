use std::collections::{BTreeMap, BTreeSet};

use etchforge::features::*;
use etchforge::ingest::{AlarmCategory, AlarmEvent, EventLog};
use etchforge::labeling::{label_log, segment_chambers, DEFAULT_INTERVAL_BOUNDS};
use etchforge::sim::{simulate, SimConfig};
use proptest::prelude::*;

fn groups(fs: FeatureSetName) -> BTreeSet<FeatureGroup> {
    fs.groups().iter().copied().collect()
}

fn small_log(seed: u64) -> EventLog {
    simulate(&SimConfig {
        seed,
        n_chambers: 2,
        horizon_hours: 2000.0,
        mean_segment_hours: 250.0,
        ..SimConfig::default()
    })
    .unwrap()
}

fn pooled_table(log: &EventLog, timeline: &Timeline, labeled: &[etchforge::labeling::LabeledRun]) -> PenaltyTable {
    let ttf: BTreeMap<usize, f64> = labeled
        .iter()
        .filter(|l| !l.censored)
        .filter_map(|l| l.ttf.map(|t| (l.run, t)))
        .collect();
    fit_penalties(&log.alarms, EventSource::Alarm, timeline, &ttf, DEFAULT_EPSILON_HOURS)
}

#[test]
fn feature_set_algebra() {
    use FeatureGroup::*;
    use FeatureSetName::*;
    let with = |fs, g| {
        let mut s = groups(fs);
        s.insert(g);
        s
    };
    assert_eq!(groups(FS3), with(FS5, ApcR));
    assert_eq!(groups(FS5), with(FS6, ApcV));
    assert_eq!(groups(FS4), with(FS3, Dips));
    assert_eq!(groups(FS6), with(FS7, LvP));
    assert_eq!(groups(FS1), BTreeSet::from([ApcV, ApcR]));
    assert_eq!(groups(FS2), BTreeSet::from([ApcV, LvP]));
    assert_eq!("fs4".parse::<FeatureSetName>().unwrap(), FS4);
    assert!("FS9".parse::<FeatureSetName>().is_err());
}

#[test]
fn penalty_is_inverse_median_with_floor() {
    let ttfs = BTreeMap::from([
        ("A".to_string(), vec![10.0, 2.0, 6.0]),
        ("B".to_string(), vec![0.2, 0.4]),
        ("C".to_string(), vec![100.0, 50.0, 20.0, 30.0]),
    ]);
    let t = penalty_table_from_ttfs(EventSource::Alarm, 1.0, ttfs, 0);
    assert_eq!(t.codes["A"].median_ttf, 6.0);
    assert_eq!(t.codes["A"].penalty, 1.0 / 6.0);
    assert_eq!(t.codes["B"].penalty, 1.0);
    assert_eq!(t.codes["C"].median_ttf, 40.0);
    assert_eq!(t.penalty("unseen"), 0.0);
    let order: Vec<&str> = t.ranked().iter().map(|c| c.code.as_str()).collect();
    assert_eq!(order, ["B", "A", "C"]);
}

#[test]
fn counters_restart_at_every_breakdown() {
    let log = small_log(1);
    let (labeled, segments, _) = label_log(&log, &DEFAULT_INTERVAL_BOUNDS, 0.0).unwrap();
    let timeline = Timeline::new(&log.runs, &segments);
    let table = pooled_table(&log, &timeline, &labeled);
    let mut checked = 0;
    for (chamber, spans) in timeline.chambers() {
        let evs = chamber_slice(&log.alarms, chamber);
        for span in spans {
            let rows = span_counters(chamber, evs, &log.runs, span, &table, 10);
            let first_end = log.runs[span.runs[0]].end();
            let expected: f64 = evs
                .iter()
                .filter(|e| e.time >= span.start && e.time < span.end && e.time <= first_end)
                .map(|e| 1.0 + table.penalty(&e.code))
                .sum();
            assert!((rows[0].weighted - expected).abs() <= 1e-9 * (1.0 + expected));
            for w in rows.windows(2) {
                assert!(w[1].count >= w[0].count && w[1].weighted >= w[0].weighted);
            }
            for r in &rows {
                assert!(r.gradient_sum <= r.weighted + 1e-9 && r.gradient_max <= r.gradient_sum + 1e-9);
            }
            checked += 1;
        }
    }
    assert!(checked > 4);
}

#[test]
fn removing_a_code_removes_exactly_its_weight() {
    let log = small_log(2);
    let (labeled, segments, _) = label_log(&log, &DEFAULT_INTERVAL_BOUNDS, 0.0).unwrap();
    let timeline = Timeline::new(&log.runs, &segments);
    let table = pooled_table(&log, &timeline, &labeled);
    let code = table.ranked()[0].code.clone();
    let p = table.penalty(&code);
    let kept: Vec<AlarmEvent> = log.alarms.iter().filter(|a| a.code != code).cloned().collect();
    for (chamber, spans) in timeline.chambers() {
        let all = chamber_slice(&log.alarms, chamber);
        let without = chamber_slice(&kept, chamber);
        for span in spans {
            let a = span_counters(chamber, all, &log.runs, span, &table, 10);
            let b = span_counters(chamber, without, &log.runs, span, &table, 10);
            for (ra, rb) in a.iter().zip(&b) {
                let removed = ra.count - rb.count;
                assert!(removed >= 0.0);
                let diff = ra.weighted - rb.weighted;
                assert!((diff - removed * (1.0 + p)).abs() <= 1e-9 * (1.0 + ra.weighted));
            }
        }
    }
}

#[test]
fn window_bounds_gradients() {
    let log = small_log(3);
    let segments = segment_chambers(&log);
    let timeline = Timeline::new(&log.runs, &segments);
    let table = penalty_table_from_ttfs(EventSource::Alarm, 1.0, BTreeMap::new(), 0);
    for (chamber, spans) in timeline.chambers() {
        let evs = chamber_slice(&log.alarms, chamber);
        for span in spans {
            let one = span_counters(chamber, evs, &log.runs, span, &table, 1);
            let all = span_counters(chamber, evs, &log.runs, span, &table, usize::MAX);
            for (i, (o, a)) in one.iter().zip(&all).enumerate() {
                assert_eq!(o.gradient_sum, o.gradient_max);
                assert_eq!(a.gradient_sum, a.weighted);
                // no penalties: weighted counts are plain counts
                assert_eq!(a.weighted, a.count);
                if i == 0 {
                    assert_eq!(o.gradient_sum, o.weighted);
                }
            }
        }
    }
}

/// Features of run r use only data up to r's end: cutting the log at any later
/// time leaves every surviving row unchanged.
#[test]
fn truncation_never_changes_earlier_rows() {
    let log = small_log(4);
    let (labeled, segments, _) = label_log(&log, &DEFAULT_INTERVAL_BOUNDS, 0.0).unwrap();
    let timeline = Timeline::new(&log.runs, &segments);
    let train: Vec<_> = labeled.iter().filter(|l| !l.censored).collect();
    let engineer = FeatureEngineer::fit(&log, &timeline, &train, &FeatureConfig::default(), 0.95).unwrap();

    for cut in [400.0, 900.0, 1333.3] {
        let mut short = log.clone();
        short.runs.retain(|r| r.end() <= cut);
        short.alarms.retain(|e| e.time <= cut);
        short.violations.retain(|e| e.time <= cut);
        short.states.retain(|e| e.time <= cut);
        short.dips.retain(|e| e.time <= cut);
        let short_tl = Timeline::new(&short.runs, &segment_chambers(&short));

        let short_rows: Vec<usize> = (0..short.runs.len()).collect();
        let full_index: BTreeMap<&str, usize> =
            log.runs.iter().enumerate().map(|(i, r)| (r.run_id.as_str(), i)).collect();
        let full_rows: Vec<usize> = short.runs.iter().map(|r| full_index[r.run_id.as_str()]).collect();

        let a = engineer.blocks(&log, &timeline, &full_rows).unwrap();
        let b = engineer.blocks(&short, &short_tl, &short_rows).unwrap();
        for spec in FeatureSetName::ALL.map(|n| FeatureSpec::new(n, 10)) {
            let ma: FeatureMatrix<f64> = materialize(&spec, &a).unwrap();
            let mb: FeatureMatrix<f64> = materialize(&spec, &b).unwrap();
            assert_eq!(ma, mb, "{} at cut {cut}", spec.name);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attach_picks_latest_run_started(times in prop::collection::vec(0.0f64..3000.0, 1..30), seed in 0u64..20) {
        let log = small_log(seed);
        let segments = segment_chambers(&log);
        let timeline = Timeline::new(&log.runs, &segments);
        for t in times {
            let e = AlarmEvent { chamber_id: "C1".into(), time: t, code: "x".into(), category: AlarmCategory::Other };
            if let Some(r) = timeline.attach(&e) {
                let run = &log.runs[r];
                prop_assert!(run.start <= t && run.chamber_id == "C1");
                let (span, p) = timeline.position(r).unwrap();
                prop_assert!(t >= span.start && t < span.end);
                if let Some(&next) = span.runs.get(p + 1) {
                    prop_assert!(log.runs[next].start > t);
                }
            }
        }
    }
}
