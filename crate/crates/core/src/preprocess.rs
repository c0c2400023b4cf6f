//! Sensor cleansing: per-recipe standardization, zero imputation and greedy
//! correlation pruning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Run;
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PreprocessError {
    #[error("recipe {0} has no fitted statistics")]
    UnknownRecipe(String),
    #[error("correlation threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("column names ({names}) do not match matrix width ({cols})")]
    ShapeMismatch { names: usize, cols: usize },
    #[error("cannot fit statistics on zero runs")]
    NoRuns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorStat {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single observation.
    pub std: f64,
    pub count: usize,
}

/// Statistics of every sensor observed under one recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeStats {
    pub recipe_id: String,
    pub sensors: BTreeMap<String, SensorStat>,
}

/// Fitted standardization: per-recipe statistics plus the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeStatsTable {
    /// Output column order (all sensors seen during fitting, sorted).
    pub columns: Vec<String>,
    pub recipes: BTreeMap<String, RecipeStats>,
}

impl RecipeStatsTable {
    pub fn get(&self, recipe: &str, sensor: &str) -> Option<&SensorStat> {
        self.recipes.get(recipe)?.sensors.get(sensor)
    }
}

/// Mean and sample standard deviation per (recipe, sensor) over non-null values.
pub fn fit_recipe_stats<'a>(
    runs: impl IntoIterator<Item = &'a Run>,
) -> Result<RecipeStatsTable, PreprocessError> {
    let mut values: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    let mut columns = std::collections::BTreeSet::new();
    let mut any = false;
    for r in runs {
        any = true;
        let per_recipe = values.entry(&r.recipe_id).or_default();
        for (name, v) in &r.sensors {
            columns.insert(name.clone());
            if let Some(v) = v {
                per_recipe.entry(name).or_default().push(*v);
            }
        }
    }
    if !any {
        return Err(PreprocessError::NoRuns);
    }
    let recipes = values
        .into_iter()
        .map(|(recipe, sensors)| {
            let sensors = sensors
                .into_iter()
                .map(|(name, xs)| {
                    let n = xs.len();
                    let mean = xs.iter().sum::<f64>() / n as f64;
                    let std = if n > 1 {
                        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
                        (ss / (n - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    (name.to_string(), SensorStat { mean, std, count: n })
                })
                .collect();
            (
                recipe.to_string(),
                RecipeStats {
                    recipe_id: recipe.to_string(),
                    sensors,
                },
            )
        })
        .collect();
    Ok(RecipeStatsTable {
        columns: columns.into_iter().collect(),
        recipes,
    })
}

/// Standardizes each run's sensors with its recipe's statistics, one row per run
/// in `table.columns` order. Null, absent, constant and never-fitted cells become
/// 0, i.e. the recipe mean.
pub fn standardize<'a, F: Scalar>(
    runs: impl IntoIterator<Item = &'a Run>,
    table: &RecipeStatsTable,
) -> Result<DenseMatrix<F>, PreprocessError> {
    let cols = table.columns.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for r in runs {
        let stats = table
            .recipes
            .get(&r.recipe_id)
            .ok_or_else(|| PreprocessError::UnknownRecipe(r.recipe_id.clone()))?;
        for name in &table.columns {
            let z = match (r.sensor(name), stats.sensors.get(name)) {
                (Some(x), Some(s)) if s.std > 0.0 => (x - s.mean) / s.std,
                _ => 0.0,
            };
            data.push(F::of(z));
        }
        rows += 1;
    }
    Ok(DenseMatrix::from_row_major(rows, cols, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub dropped: String,
    pub kept_correlate: String,
    pub abs_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedColumn>,
    pub threshold: f64,
    /// Kept columns with zero variance; their correlation is treated as 0.
    pub zero_variance: Vec<String>,
}

impl PruneReport {
    pub fn is_kept(&self, name: &str) -> bool {
        self.kept.iter().any(|k| k == name)
    }
}

/// Greedy first-kept-wins pruning in column order: a column is dropped when its
/// absolute Pearson correlation with any already kept column reaches `threshold`.
pub fn prune_correlated<F: Scalar>(
    matrix: &DenseMatrix<F>,
    names: &[String],
    threshold: f64,
) -> Result<PruneReport, PreprocessError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PreprocessError::InvalidThreshold(threshold));
    }
    if names.len() != matrix.ncols() {
        return Err(PreprocessError::ShapeMismatch {
            names: names.len(),
            cols: matrix.ncols(),
        });
    }
    let n = matrix.nrows();
    let centered: Vec<(Vec<f64>, f64)> = (0..matrix.ncols())
        .map(|c| {
            let col: Vec<f64> = matrix.column(c).into_iter().map(|v| v.to_f64_lossy()).collect();
            let mean = col.iter().sum::<f64>() / n.max(1) as f64;
            let dev: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let ss: f64 = dev.iter().map(|d| d * d).sum();
            let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            let tiny = n as f64 * (f64::EPSILON * scale).powi(2);
            (dev, if ss > tiny { ss } else { 0.0 })
        })
        .collect();

    let mut report = PruneReport {
        kept: Vec::new(),
        dropped: Vec::new(),
        threshold,
        zero_variance: Vec::new(),
    };
    let mut kept_idx: Vec<usize> = Vec::new();
    for (j, (dev_j, ss_j)) in centered.iter().enumerate() {
        if *ss_j == 0.0 {
            report.kept.push(names[j].clone());
            report.zero_variance.push(names[j].clone());
            kept_idx.push(j);
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for &k in &kept_idx {
            let (dev_k, ss_k) = &centered[k];
            if *ss_k == 0.0 {
                continue;
            }
            let cov: f64 = dev_j.iter().zip(dev_k).map(|(a, b)| a * b).sum();
            let rho = (cov / (ss_j * ss_k).sqrt()).abs().min(1.0);
            if rho >= threshold && best.map_or(true, |(_, r)| rho > r) {
                best = Some((k, rho));
            }
        }
        match best {
            Some((k, rho)) => report.dropped.push(DroppedColumn {
                dropped: names[j].clone(),
                kept_correlate: names[k].clone(),
                abs_rho: rho,
            }),
            None => {
                report.kept.push(names[j].clone());
                kept_idx.push(j);
            }
        }
    }
    Ok(report)
}

/// Fraction of (run, sensor) cells that are null or absent, over the union of
/// sensor names. Empty input gives 0.
pub fn missing_rate<'a>(runs: impl IntoIterator<Item = &'a Run> + Clone) -> f64 {
    let names: std::collections::BTreeSet<&str> = runs
        .clone()
        .into_iter()
        .flat_map(|r| r.sensors.keys().map(String::as_str))
        .collect();
    let mut cells = 0usize;
    let mut missing = 0usize;
    for r in runs {
        for name in &names {
            cells += 1;
            if r.sensor(name).is_none() {
                missing += 1;
            }
        }
    }
    if cells == 0 {
        0.0
    } else {
        missing as f64 / cells as f64
    }
}

/// Standardization and pruning fitted together on training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPreprocessor {
    pub stats: RecipeStatsTable,
    pub prune: PruneReport,
    kept_idx: Vec<usize>,
}

impl SensorPreprocessor {
    pub fn fit<'a>(
        runs: impl IntoIterator<Item = &'a Run> + Clone,
        threshold: f64,
    ) -> Result<Self, PreprocessError> {
        let stats = fit_recipe_stats(runs.clone())?;
        let z: DenseMatrix<f64> = standardize(runs, &stats)?;
        let prune = prune_correlated(&z, &stats.columns, threshold)?;
        let kept_idx = stats
            .columns
            .iter()
            .enumerate()
            .filter(|(_, n)| prune.is_kept(n))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            stats,
            prune,
            kept_idx,
        })
    }

    /// Standardized values of the kept sensors, in `prune.kept` order.
    pub fn transform<'a, F: Scalar>(
        &self,
        runs: impl IntoIterator<Item = &'a Run>,
    ) -> Result<DenseMatrix<F>, PreprocessError> {
        let z: DenseMatrix<F> = standardize(runs, &self.stats)?;
        Ok(z.select_columns(&self.kept_idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(recipe: &str, sensors: &[(&str, Option<f64>)]) -> Run {
        Run {
            chamber_id: "C1".into(),
            run_id: "r".into(),
            recipe_id: recipe.into(),
            start: 0.0,
            duration: 1.0,
            sensors: sensors.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn stats_use_sample_std() {
        let runs = [1.0, 2.0, 3.0].map(|v| run("A", &[("s", Some(v))]));
        let t = fit_recipe_stats(&runs).unwrap();
        let s = t.get("A", "s").unwrap();
        assert_eq!((s.mean, s.std, s.count), (2.0, 1.0, 3));
    }

    #[test]
    fn single_observation_has_zero_std() {
        let runs = [run("A", &[("s", Some(5.0))])];
        let t = fit_recipe_stats(&runs).unwrap();
        assert_eq!(t.get("A", "s").unwrap().std, 0.0);
        assert_eq!(t.get("A", "s").unwrap().mean, 5.0);
    }

    #[test]
    fn recipes_are_independent() {
        let a = [1.0, 2.0, 3.0].map(|v| run("A", &[("s", Some(v))]));
        let b1 = [10.0, 20.0].map(|v| run("B", &[("s", Some(v))]));
        let b2 = [-4.0, 7.0, 9.0].map(|v| run("B", &[("s", Some(v))]));
        let t1 = fit_recipe_stats(a.iter().chain(&b1)).unwrap();
        let t2 = fit_recipe_stats(a.iter().chain(&b2)).unwrap();
        assert_eq!(t1.recipes["A"], t2.recipes["A"]);
        assert_ne!(t1.recipes["B"], t2.recipes["B"]);
    }

    #[test]
    fn standardize_hand_values() {
        let runs = [1.0, 2.0, 3.0].map(|v| run("A", &[("s", Some(v))]));
        let t = fit_recipe_stats(&runs).unwrap();
        let z: DenseMatrix<f64> = standardize(&runs, &t).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn nulls_and_constant_columns_become_zero() {
        let runs = vec![
            run("A", &[("helium", None), ("c", Some(4.0))]),
            run("A", &[("helium", Some(1.0)), ("c", Some(4.0))]),
            run("A", &[("helium", Some(3.0)), ("c", Some(4.0))]),
        ];
        let t = fit_recipe_stats(&runs).unwrap();
        let z: DenseMatrix<f64> = standardize(&runs, &t).unwrap();
        assert_eq!(t.columns, ["c", "helium"]);
        assert_eq!(z.column(0), vec![0.0; 3]);
        assert_eq!(z.get(0, 1), 0.0);
    }

    #[test]
    fn unknown_recipe_is_an_error() {
        let t = fit_recipe_stats(&[run("A", &[("s", Some(1.0))])]).unwrap();
        let err = standardize::<f64>(&[run("B", &[("s", Some(1.0))])], &t).unwrap_err();
        assert_eq!(err, PreprocessError::UnknownRecipe("B".into()));
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn exact_duplicate_is_dropped_against_original() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let x = i as f64;
                let mut r: Vec<f64> = (0..5)
                    .map(|c| ((x + 1.0) * (c as f64 + 1.3)).sin() * (c as f64 + 1.0))
                    .collect();
                r.push(r[2]);
                r
            })
            .collect();
        let m = DenseMatrix::from_rows(&rows);
        let rep = prune_correlated(&m, &names(6), 0.95).unwrap();
        assert_eq!(rep.dropped.len(), 1);
        let d = &rep.dropped[0];
        assert_eq!((d.dropped.as_str(), d.kept_correlate.as_str()), ("c5", "c2"));
        assert!((d.abs_rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_one_keeps_jittered_columns() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = i as f64;
                vec![x, x + 1e-3 * (x * 7.1).sin(), 2.0 * x + 1e-3 * (x * 3.3).cos()]
            })
            .collect();
        let m = DenseMatrix::from_rows(&rows);
        let rep = prune_correlated(&m, &names(3), 1.0).unwrap();
        assert!(rep.dropped.is_empty());
    }

    #[test]
    fn zero_variance_columns_are_kept_and_flagged() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![0.0, i as f64, 0.0]).collect();
        let m = DenseMatrix::from_rows(&rows);
        let rep = prune_correlated(&m, &names(3), 0.95).unwrap();
        assert_eq!(rep.kept, names(3));
        assert_eq!(rep.zero_variance, ["c0", "c2"]);
    }

    #[test]
    fn invalid_threshold_rejected() {
        let m = DenseMatrix::<f64>::zeros(3, 1);
        assert!(prune_correlated(&m, &names(1), 0.0).is_err());
        assert!(prune_correlated(&m, &names(1), 1.5).is_err());
    }

    #[test]
    fn missing_rate_counts_null_cells() {
        let none: Vec<Run> = Vec::new();
        assert_eq!(missing_rate(&none), 0.0);
        let clean = vec![run("A", &[("a", Some(1.0)), ("b", Some(2.0))])];
        assert_eq!(missing_rate(&clean), 0.0);
        let runs = vec![
            run("A", &[("a", Some(1.0)), ("b", None)]),
            run("A", &[("a", Some(1.0)), ("b", Some(2.0))]),
        ];
        assert_eq!(missing_rate(&runs), 0.25);
    }
}
