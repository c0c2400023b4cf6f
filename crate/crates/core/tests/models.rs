use etchforge::features::FeatureMatrix;
use etchforge::linalg::DenseMatrix;
use etchforge::models::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_row_major(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

/// Two Gaussian-ish blobs split on the sign of the first column.
fn separable(seed: u64, n: usize) -> (DenseMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_matrix(&mut rng, n, 3);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let pos = r % 2 == 0;
        let v = x.get(r, 0).abs() + 0.5;
        x.set(r, 0, if pos { v } else { -v });
        y.push(pos);
    }
    (x, y)
}

fn fm(x: &DenseMatrix<f64>) -> FeatureMatrix<f64> {
    FeatureMatrix::from_matrix(x.clone())
}

fn labels(m: &TrainedModel<f64>, x: &DenseMatrix<f64>) -> Vec<bool> {
    m.predict(&fm(x)).unwrap().labels().unwrap().to_vec()
}

fn values(m: &TrainedModel<f64>, x: &DenseMatrix<f64>) -> Vec<f64> {
    match m.predict(&fm(x)).unwrap() {
        Predictions::Regression(v) => v,
        Predictions::Classification { scores, .. } => scores,
    }
}

#[test]
fn lr_residuals_are_orthogonal_to_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = random_matrix(&mut rng, 40, 4);
        let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let m = LinearModel::fit(&x, &y);
        let pred = m.predict(&x);
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-6);
        for c in 0..4 {
            let dot: f64 = x.column(c).iter().zip(&resid).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-6, "column {c}: {dot}");
        }
    }
}

#[test]
fn lr_matches_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (30, 3);
    let x = random_matrix(&mut rng, n, d);
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = LinearModel::fit(&x, &y);
    let a = DMatrix::from_fn(n, d + 1, |r, c| if c == 0 { 1.0 } else { x.get(r, c - 1) });
    let beta = a.pseudo_inverse(1e-12).unwrap() * DVector::from_vec(y);
    assert!((m.intercept - beta[0]).abs() < 1e-9);
    for j in 0..d {
        assert!((m.coefficients[j] - beta[j + 1]).abs() < 1e-9);
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for task in [Task::Regression, Task::Classification] {
        let x = random_matrix(&mut rng, 12, 3);
        let y: Vec<f64> = (0..12)
            .map(|i| match task {
                Task::Regression => rng.gen_range(-1.0..1.0),
                Task::Classification => (i % 2) as f64,
            })
            .collect();
        let mut net = MlpNet::random(task, 3, 4, 11);
        let g = mlp_gradient(&net, &x, &y);
        let p = net.params();
        let h = 1e-6;
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] += h;
            net.set_params(&q);
            let up = mlp_loss(&net, &x, &y);
            q[k] -= 2.0 * h;
            net.set_params(&q);
            let down = mlp_loss(&net, &x, &y);
            let num = (up - down) / (2.0 * h);
            assert!((num - g[k]).abs() <= 1e-5 * (1.0 + num.abs()), "{task} param {k}: {num} vs {}", g[k]);
        }
        net.set_params(&p);
    }
}

#[test]
fn mlp_gradient_steps_reduce_loss() {
    let (x, y) = separable(1, 40);
    let y: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
    let mut net = MlpNet::random(Task::Classification, 3, 5, 2);
    let mut last = mlp_loss(&net, &x, &y);
    let first = last;
    for _ in 0..10 {
        let g = mlp_gradient(&net, &x, &y);
        let p: Vec<f64> = net.params().iter().zip(&g).map(|(a, b)| a - 0.1 * b).collect();
        net.set_params(&p);
        let l = mlp_loss(&net, &x, &y);
        assert!(l <= last + 1e-12);
        last = l;
    }
    assert!(last < first);
}

#[test]
fn gbc_separates_and_loss_never_rises() {
    let (x, y) = separable(4, 60);
    let mut params = TreeParams::new(Criterion::Variance);
    params.max_depth = 2;
    params.min_samples_leaf = 1;
    let mut state = GbcState::new(&y, vec![1.0; y.len()], 0.3, params);
    let mut last = state.log_loss(&y);
    for _ in 0..10 {
        state = gbc_fit_round(state, &x, &y);
        let l = state.log_loss(&y);
        assert!(l <= last + 1e-12, "{l} > {last}");
        last = l;
    }
    let p = state.model.predict_proba(&x);
    let acc = p.iter().zip(&y).filter(|(&pi, &yi)| (pi >= 0.5) == yi).count();
    assert_eq!(acc, y.len());
}

#[test]
fn sgd_objective_decreases_and_separates() {
    let (x, y) = separable(6, 80);
    let spec = ModelSpec::new(ModelFamily::SgdSvm, Task::Classification).with("epochs", 20.0);
    let m = fit(&spec, &fm(&x), Targets::Classification(&y)).unwrap();
    let ModelParams::Sgd(s) = &m.params else { panic!() };
    assert_eq!(s.objective_history.len(), 20);
    assert!(s.objective_history.last().unwrap() < s.objective_history.first().unwrap());
    let acc = labels(&m, &x).iter().zip(&y).filter(|(a, b)| a == b).count();
    assert!(acc as f64 >= 0.95 * y.len() as f64, "accuracy {acc}");
    // margin side agrees with the predicted label
    for (score, label) in values(&m, &x).iter().zip(labels(&m, &x)) {
        assert_eq!(*score >= 0.0, label);
    }
}

#[test]
fn forest_of_one_tree_is_that_tree() {
    let (x, y) = separable(7, 50);
    let spec = ModelSpec::new(ModelFamily::Rf, Task::Classification).with("n_trees", 1.0);
    let m = fit(&spec, &fm(&x), Targets::Classification(&y)).unwrap();
    let ModelParams::Forest(f) = &m.params else { panic!() };
    assert_eq!(f.trees.len(), 1);
    assert_eq!(f.predict(&x), f.trees[0].predict(&x));
}

#[test]
fn knn_with_k1_reproduces_training_labels() {
    let (x, y) = separable(8, 30);
    let spec = ModelSpec::new(ModelFamily::Knn, Task::Classification).with("k", 1.0);
    let m = fit(&spec, &fm(&x), Targets::Classification(&y)).unwrap();
    assert_eq!(labels(&m, &x), y);
}

#[test]
fn knn_is_invariant_to_affine_rescaling() {
    let (x, y) = separable(10, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let queries = random_matrix(&mut rng, 25, 3);
    let affine = |m: &DenseMatrix<f64>| {
        let mut out = m.clone();
        for r in 0..m.nrows() {
            for (c, (a, b)) in [(4.0, 1.0), (0.25, -3.0), (8.0, 0.5)].iter().enumerate() {
                out.set(r, c, a * m.get(r, c) + b);
            }
        }
        out
    };
    let spec = ModelSpec::new(ModelFamily::Knn, Task::Classification).with("k", 3.0);
    let a = fit(&spec, &fm(&x), Targets::Classification(&y)).unwrap();
    let b = fit(&spec, &fm(&affine(&x)), Targets::Classification(&y)).unwrap();
    assert_eq!(labels(&a, &queries), labels(&b, &affine(&queries)));
}

#[test]
fn tree_ensembles_ignore_monotone_transforms() {
    let (x, y) = separable(12, 60);
    let yr: Vec<f64> = (0..60).map(|i| (i as f64).sin() + x.get(i, 1)).collect();
    let warped = x.map(|v| v * v * v + 2.0 * v);
    let cases = [
        (ModelSpec::new(ModelFamily::Tree, Task::Regression), false),
        (ModelSpec::new(ModelFamily::Rf, Task::Regression).with("n_trees", 5.0), false),
        (ModelSpec::new(ModelFamily::Tree, Task::Classification), true),
        (ModelSpec::new(ModelFamily::Rf, Task::Classification).with("n_trees", 5.0), true),
        (ModelSpec::new(ModelFamily::Gbc, Task::Classification).with("n_rounds", 10.0), true),
    ];
    for (spec, cls) in cases {
        let t = |m: &DenseMatrix<f64>| {
            if cls {
                fit(&spec, &fm(m), Targets::Classification(&y)).unwrap()
            } else {
                fit(&spec, &fm(m), Targets::Regression(&yr)).unwrap()
            }
        };
        assert_eq!(values(&t(&x), &x), values(&t(&warped), &warped), "{}", spec.label());
    }
}

#[test]
fn every_family_is_deterministic_and_round_trips() {
    let (x, y) = separable(13, 40);
    let yr: Vec<f64> = (0..40).map(|i| x.get(i, 0) * 3.0 + x.get(i, 2)).collect();
    for family in ModelFamily::ALL {
        for task in [Task::Regression, Task::Classification] {
            if !family.supports(task) {
                continue;
            }
            let spec = ModelSpec::new(family, task).with_seed(21);
            let targets = match task {
                Task::Regression => Targets::Regression(&yr),
                Task::Classification => Targets::Classification(&y),
            };
            let a = fit(&spec, &fm(&x), targets).unwrap();
            let b = fit(&spec, &fm(&x), targets).unwrap();
            assert_eq!(a, b, "{family} {task}");
            let back = TrainedModel::<f64>::from_json(&a.to_json()).unwrap();
            assert_eq!(
                a.predict(&fm(&x)).unwrap(),
                back.predict(&fm(&x)).unwrap(),
                "{family} {task}"
            );
        }
    }
}

#[test]
fn schema_and_version_are_checked() {
    let (x, y) = separable(14, 20);
    let m = fit(&ModelSpec::new(ModelFamily::Tree, Task::Classification), &fm(&x), Targets::Classification(&y)).unwrap();
    let mut other = fm(&x);
    other.names[0] = "renamed".into();
    assert!(matches!(m.predict(&other), Err(ModelError::SchemaMismatch { .. })));
    let doc = m.to_json().replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert_eq!(TrainedModel::<f64>::from_json(&doc).unwrap_err(), ModelError::UnsupportedVersion(99));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lr_recovers_exact_linear_targets(
        coef in prop::collection::vec(-5.0f64..5.0, 3),
        intercept in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 25, 3);
        let y: Vec<f64> = (0..25)
            .map(|r| intercept + (0..3).map(|c| coef[c] * x.get(r, c)).sum::<f64>())
            .collect();
        let m = LinearModel::fit(&x, &y);
        prop_assert!((m.intercept - intercept).abs() < 1e-8);
        for c in 0..3 {
            prop_assert!((m.coefficients[c] - coef[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn classification_scores_are_probabilities(seed in 0u64..500) {
        let (x, y) = separable(seed, 30);
        for family in [ModelFamily::Tree, ModelFamily::Rf, ModelFamily::Gbc, ModelFamily::Knn] {
            let spec = ModelSpec::new(family, Task::Classification).with_seed(seed);
            let spec = if family == ModelFamily::Rf { spec.with("n_trees", 5.0) } else { spec };
            let spec = if family == ModelFamily::Gbc { spec.with("n_rounds", 5.0) } else { spec };
            let m = fit(&spec, &fm(&x), Targets::Classification(&y)).unwrap();
            prop_assert!(values(&m, &x).iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}
