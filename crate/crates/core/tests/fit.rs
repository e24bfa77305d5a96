use mixreg::optim::{fit, init_xavier, OptimConfig, OptimMethod, OptimState};
use mixreg::predictors::PredictorSpec;
use mixreg::{DataTable, Error, Family, MixtureModel, ModelSpec, ParamVector};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn normal_sample(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

fn constant_table(n: usize) -> DataTable {
    DataTable::new().with_numeric("x", vec![0.0; n]).unwrap()
}

#[test]
fn intercept_only_normal_recovers_mle() {
    let y = normal_sample(2000, 3.0, 2.0, 1);
    let spec = ModelSpec::homogeneous(Family::Normal, 1, PredictorSpec::intercept_only());
    let model = MixtureModel::new(spec, &constant_table(2000), y).unwrap();
    let cfg = OptimConfig {
        seed: 4,
        ..Default::default()
    };
    let res = fit(&model, &cfg, None).unwrap();
    let mu = res.psi.0[0];
    let sigma = res.psi.0[1].exp();
    assert!((mu - 3.0).abs() < 0.15, "mu {mu}");
    assert!((sigma - 2.0).abs() < 0.15, "sigma {sigma}");
}

#[test]
fn separated_components_recover_weights() {
    let mut y = normal_sample(1000, -10.0, 1.0, 2);
    y.extend(normal_sample(1000, 10.0, 1.0, 3));
    let spec = ModelSpec::homogeneous(Family::Normal, 2, PredictorSpec::intercept_only());
    let model = MixtureModel::new(spec, &constant_table(2000), y).unwrap();
    // start the locations apart so both components are used
    let init = ParamVector(vec![-1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    let cfg = OptimConfig {
        learning_rate: Some(0.05),
        seed: 1,
        ..Default::default()
    };
    let res = fit(&model, &cfg, Some(&init)).unwrap();
    let pbar = model.mean_weights(&res.psi, &model.all_rows()).unwrap();
    assert!((pbar[0] - 0.5).abs() < 0.05, "{pbar:?}");
}

#[test]
fn zero_patience_runs_one_epoch() {
    let y = normal_sample(200, 0.0, 1.0, 5);
    let spec = ModelSpec::homogeneous(Family::Normal, 1, PredictorSpec::intercept_only());
    let model = MixtureModel::new(spec, &constant_table(200), y).unwrap();
    let cfg = OptimConfig {
        patience: 0,
        ..Default::default()
    };
    let res = fit(&model, &cfg, None).unwrap();
    assert_eq!(res.val_trace.len(), 1);
    assert_eq!(res.restarts[0].epochs, 1);
}

#[test]
fn fits_are_deterministic_and_best_snapshot_is_reported() {
    let y = normal_sample(300, 1.0, 0.5, 6);
    let spec = ModelSpec::homogeneous(Family::Laplace, 2, PredictorSpec::intercept_only());
    let model = MixtureModel::new(spec, &constant_table(300), y).unwrap();
    let cfg = OptimConfig {
        method: OptimMethod::Rmsprop,
        restarts: 3,
        max_epochs: 60,
        seed: 9,
        ..Default::default()
    };
    let a = fit(&model, &cfg, None).unwrap();
    let b = fit(&model, &cfg, None).unwrap();
    assert_eq!(a.psi, b.psi);
    assert_eq!(a.val_trace, b.val_trace);
    let best_over_all = a
        .restarts
        .iter()
        .filter_map(|r| r.best_val_objective)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val_objective, best_over_all);
    let min_trace = a.val_trace.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val_objective, min_trace);
}

#[test]
fn full_batch_adam_reaches_least_squares() {
    let n = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(n).collect();
    let noise = normal_sample(n, 0.0, 0.5, 11);
    let y: Vec<f64> = x.iter().zip(&noise).map(|(x, e)| 1.0 - 2.0 * x + e).collect();
    let table = DataTable::new().with_numeric("x1", x.clone()).unwrap();
    let spec = ModelSpec::new(
        vec![mixreg::ComponentSpec::new(
            Family::Normal,
            vec![PredictorSpec::linear(&["x1"]), PredictorSpec::intercept_only()],
        )],
        PredictorSpec::intercept_only(),
    );
    let model = MixtureModel::new(spec, &table, y.clone()).unwrap();
    // plain full-batch loop, since `fit` reports the best validation snapshot
    let rows = model.all_rows();
    let mut psi = ParamVector::zeros(model.layout());
    let mut state = OptimState::new(OptimMethod::Adam, psi.len());
    for _ in 0..40_000 {
        let mut g = model.gradient(&psi, &rows).unwrap();
        g.iter_mut().for_each(|v| *v /= n as f64);
        state.step(&mut psi.0, &g, 0.01);
    }
    let z = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { x[r] });
    let yv = DVector::from_vec(y);
    let ols = (z.transpose() * &z).lu().solve(&(z.transpose() * yv)).unwrap();
    let dist = ((psi.0[0] - ols[0]).powi(2) + (psi.0[1] - ols[1]).powi(2)).sqrt();
    assert!(dist < 1e-4, "distance {dist}");
}

#[test]
fn xavier_init_is_bounded_and_reproducible() {
    let table = DataTable::new()
        .with_numeric("a", vec![0.1, 0.2, 0.3])
        .unwrap()
        .with_numeric("b", vec![1.0, 0.0, 2.0])
        .unwrap();
    let spec = ModelSpec::homogeneous(Family::Normal, 2, PredictorSpec::linear(&["a", "b"]));
    let model = MixtureModel::new(spec, &table, vec![0.0; 3]).unwrap();
    let draw = |s| init_xavier(model.design(), &mut ChaCha8Rng::seed_from_u64(s));
    let psi = draw(3);
    assert_eq!(psi, draw(3));
    let layout = model.layout();
    for p in &layout.predictors {
        assert_eq!(psi.0[p.offset], 0.0);
        // each linear term has width 1, so a = sqrt(6 / 2)
        for v in &psi.0[p.offset + 1..p.offset + p.width] {
            assert!(v.abs() <= 3f64.sqrt());
        }
    }
}

#[test]
fn divergence_is_reported() {
    let y = normal_sample(100, 0.0, 1.0, 12);
    let spec = ModelSpec::homogeneous(Family::Normal, 1, PredictorSpec::intercept_only());
    let model = MixtureModel::new(spec, &constant_table(100), y).unwrap();
    let cfg = OptimConfig {
        method: OptimMethod::Sgd,
        learning_rate: Some(1e300),
        restarts: 2,
        ..Default::default()
    };
    let err = fit(&model, &cfg, None).unwrap_err();
    assert_eq!(err, Error::AllRestartsDiverged { restarts: 2 });
}

