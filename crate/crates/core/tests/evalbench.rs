use std::collections::BTreeMap;

use etchforge::evalbench::*;
use etchforge::features::{FeatureSetName, FeatureSpec};
use etchforge::ingest::{ChamberState, EventLog, Run, StateChange};
use etchforge::labeling::{label_log, DEFAULT_INTERVAL_BOUNDS};
use etchforge::models::{ModelFamily, ModelSpec, Task};
use etchforge::sim::{simulate, SimConfig};
use proptest::prelude::*;

/// `n` identical segments of `per` runs of `d` hours each on one chamber.
fn regular_log(n: usize, per: usize, d: f64) -> EventLog {
    let mut log = EventLog::default();
    let mut t = 0.0;
    for s in 0..=n {
        log.states.push(StateChange { chamber_id: "C1".into(), time: t, state: ChamberState::Breakdown });
        if s == n {
            break;
        }
        t += 1.0;
        for i in 0..per {
            log.runs.push(Run {
                chamber_id: "C1".into(),
                run_id: format!("r{s}-{i}"),
                recipe_id: "R".into(),
                start: t,
                duration: d,
                sensors: BTreeMap::new(),
            });
            t += d;
        }
    }
    log
}

#[test]
fn b3_is_exact_when_segments_have_equal_length() {
    let log = regular_log(6, 8, 2.5);
    let (labeled, segments, _) = label_log(&log, &DEFAULT_INTERVAL_BOUNDS, 0.0).unwrap();
    let data = EvalData::new(&log, &labeled, &segments);
    assert_eq!(data.rows.len(), 48);
    let totals: Vec<f64> = segments.iter().filter(|s| s.is_complete()).map(|s| s.total_productive_hours).collect();
    let xbar = mean_segment_hours(&totals).unwrap();
    assert_eq!(xbar, 20.0);
    let elapsed: Vec<f64> = data.rows.iter().map(|r| r.elapsed).collect();
    let truth: Vec<f64> = data.rows.iter().map(|r| r.ttf).collect();
    let b3 = benchmark_b3(xbar, &elapsed);
    assert_eq!(rmse(&b3.values, &truth).unwrap(), 0.0);
    let health: Vec<f64> = data.rows.iter().map(|r| r.health).collect();
    let b3h = benchmark_b3_health(xbar, &elapsed);
    assert!(rmse(&b3h.values, &health).unwrap() < 1e-12 + 2.5 / 20.0);
    assert_eq!(relative_rmse(1.0, 0.0), Err(EvalError::ZeroBenchmark));
}

#[test]
fn benchmarks_hand_worked() {
    assert_eq!(benchmark_b1(&[1.0, 2.0, 6.0], 2).unwrap().values, [3.0, 3.0]);
    assert!(benchmark_b1(&[], 2).is_err());
    let b2 = benchmark_b2(&["a", "b", "a", "b"], &[1.0, 10.0, 3.0, 20.0]);
    assert_eq!(b2.values, [2.0, 15.0, 2.0, 15.0]);
    assert_eq!(benchmark_b3(100.0, &[30.0, 120.0]).values, [70.0, 0.0]);
    assert_eq!(benchmark_b3_health(100.0, &[30.0, 120.0]).values, [0.7, 0.0]);
}

#[test]
fn metrics_hand_worked() {
    let truth = [true, true, false, false, true];
    let pred = [true, false, true, false, true];
    let m = prf1(&pred, &truth).unwrap();
    assert_eq!((m.precision, m.recall), (2.0 / 3.0, 2.0 / 3.0));
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    let none = prf1(&[false; 3], &[true, false, true]).unwrap();
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    assert_eq!(rmse(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), 2f64.sqrt());
    assert!(rmse(&[], &[]).is_err());
}

#[test]
fn report_has_one_row_per_pair_plus_benchmarks() {
    let log = simulate(&SimConfig {
        n_chambers: 3,
        horizon_hours: 2500.0,
        mean_segment_hours: 300.0,
        ..SimConfig::default()
    })
    .unwrap();
    let (labeled, segments, _) = label_log(&log, &DEFAULT_INTERVAL_BOUNDS, 5.0).unwrap();
    let data = EvalData::new(&log, &labeled, &segments);
    let fs = [FeatureSpec::new(FeatureSetName::FS1, 10), FeatureSpec::new(FeatureSetName::FS7, 10)];
    let cfg = EvalConfig::default();

    let reg = [
        ModelSpec::new(ModelFamily::Lr, Task::Regression),
        ModelSpec::new(ModelFamily::Tree, Task::Regression),
    ];
    let out = run_task(EvalTask::TtfRegression, &fs, &reg, &data, &cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.rows.len(), fs.len() * reg.len() + 3);
    assert_eq!(r.fold_sizes.iter().sum::<usize>(), r.n_runs);
    assert_eq!(r.n_runs, data.rows.len());
    assert_eq!(r.model_rows().count(), 4);
    for kind in BenchmarkKind::ALL {
        assert!(r.benchmark(kind).is_some());
    }
    assert_eq!(r.benchmark(BenchmarkKind::B3).unwrap().pooled.relative_rmse, Some(0.0));
    assert_eq!(out.predictions.values.len(), r.rows.len());

    let cls = [ModelSpec::new(ModelFamily::Tree, Task::Classification).with("balanced", 1.0)];
    let cfg = EvalConfig { bounds: vec![24.0, 168.0], ..cfg };
    let out = run_task(EvalTask::IntervalClassification, &fs, &cls, &data, &cfg).unwrap();
    assert_eq!(out.report.rows.len(), fs.len() + 3);
    for row in &out.report.rows {
        assert_eq!(row.pooled.intervals.len(), 2);
        assert_eq!(row.folds.len(), 4);
    }
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("C{}:{i:03}", i % 3)).collect()
}

proptest! {
    #[test]
    fn folds_are_balanced_and_deterministic(n in 4usize..200, k in 2usize..8, seed in 0u64..1000) {
        prop_assume!(n >= k);
        let a = grouped_kfold(&ids(n), k, seed).unwrap();
        prop_assert_eq!(&a, &grouped_kfold(&ids(n), k, seed).unwrap());
        prop_assert_eq!(a.folds.len(), n);
        let sizes: Vec<usize> = (0..k).map(|f| a.segments_in(f).len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn f1_is_permutation_invariant(pairs in prop::collection::vec(any::<(bool, bool)>(), 1..100), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let split = |v: &[(bool, bool)]| -> (Vec<bool>, Vec<bool>) { v.iter().copied().unzip() };
        let (p1, t1) = split(&pairs);
        let (p2, t2) = split(&shuffled);
        prop_assert_eq!(prf1(&p1, &t1).unwrap(), prf1(&p2, &t2).unwrap());
    }

    #[test]
    fn relative_rmse_increases_with_rmse(b3 in 0.1f64..1000.0, x in 0.0f64..1000.0, dx in 0.01f64..100.0) {
        prop_assert!(relative_rmse(x + dx, b3).unwrap() > relative_rmse(x, b3).unwrap());
        prop_assert_eq!(relative_rmse(b3, b3).unwrap(), 0.0);
    }

    #[test]
    fn f1_lies_between_min_and_max(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let f = f1_score(p, r);
        prop_assert!(f >= p.min(r) - 1e-15 && f <= p.max(r) + 1e-15);
    }
}
