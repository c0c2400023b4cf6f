use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchmarkKind {
    B1,
    B2,
    B3,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 3] = [BenchmarkKind::B1, BenchmarkKind::B2, BenchmarkKind::B3];
}

impl std::fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPrediction {
    pub kind: BenchmarkKind,
    pub values: Vec<f64>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Naive benchmark: the training mean repeated for every evaluated run.
pub fn benchmark_b1(train_targets: &[f64], n_eval: usize) -> Result<BenchmarkPrediction, EvalError> {
    let m = mean(train_targets.iter().copied()).ok_or(EvalError::NoTrainingData)?;
    Ok(BenchmarkPrediction {
        kind: BenchmarkKind::B1,
        values: vec![m; n_eval],
    })
}

/// Visionary benchmark: each run gets the mean true target of its own segment.
pub fn benchmark_b2<S: Ord>(segments: &[S], truth: &[f64]) -> BenchmarkPrediction {
    let mut acc: BTreeMap<&S, (f64, usize)> = BTreeMap::new();
    for (s, &t) in segments.iter().zip(truth) {
        let e = acc.entry(s).or_default();
        e.0 += t;
        e.1 += 1;
    }
    BenchmarkPrediction {
        kind: BenchmarkKind::B2,
        values: segments
            .iter()
            .map(|s| {
                let (sum, n) = acc[s];
                sum / n as f64
            })
            .collect(),
    }
}

/// Mean productive hours of complete training segments.
pub fn mean_segment_hours(total_hours: &[f64]) -> Result<f64, EvalError> {
    mean(total_hours.iter().copied()).ok_or(EvalError::NoTrainingData)
}

/// Realistic benchmark: `max(0, x̄ - elapsed)`, where `elapsed` includes the
/// run's own duration.
pub fn benchmark_b3(mean_hours: f64, elapsed: &[f64]) -> BenchmarkPrediction {
    BenchmarkPrediction {
        kind: BenchmarkKind::B3,
        values: elapsed.iter().map(|&e| (mean_hours - e).max(0.0)).collect(),
    }
}

/// B3 on the health scale: `clamp((x̄ - elapsed) / x̄, 0, 1)`.
pub fn benchmark_b3_health(mean_hours: f64, elapsed: &[f64]) -> BenchmarkPrediction {
    BenchmarkPrediction {
        kind: BenchmarkKind::B3,
        values: elapsed
            .iter()
            .map(|&e| {
                if mean_hours > 0.0 {
                    ((mean_hours - e) / mean_hours).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    }
}
