use mixreg::em::{em_fit, EmConfig};
use mixreg::metrics::{assignment_with_sizes, coefficient_rmse, ComparableParams};
use mixreg::simgen::*;
use mixreg::{DataTable, Family, MixtureModel, ParamVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn weights_respect_the_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 0..1000 {
        let m = LINEAR_M[k % LINEAR_M.len()];
        let w = draw_weights(m, &mut rng);
        assert_eq!(w.len(), m);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= MIN_WEIGHT), "{w:?}");
    }
}

#[test]
fn linear_truth_has_expected_length() {
    for (p_m, len) in [(2, 14), (10, 46)] {
        let d = LinearDesign { n: 300, m: 2, p_m, family: Family::Normal, seed: 7 };
        let data = gen_linear_mixture(&d).unwrap();
        assert_eq!(data.truth.psi.as_ref().unwrap().len(), len);
        assert_eq!(data.y.len(), 300);
        assert_eq!(data.covariates.names().len(), p_m);
        assert!(data.truth.pi.iter().all(|&p| p >= MIN_WEIGHT));
    }
}

#[test]
fn overfit_weight_lies_in_interval() {
    for seed in 0..50 {
        let data = gen_overfit_mixture(&OverfitDesign { n: 100, seed }).unwrap();
        let (lo, hi) = OVERFIT_PI1;
        let pi = &data.truth.pi;
        assert!(pi[0] > lo && pi[0] < hi, "{pi:?}");
        assert!((pi[0] + pi[1] - 1.0).abs() < 1e-15);
        assert_eq!(data.truth.psi.as_ref().unwrap().len(), 46);
    }
}

#[test]
fn additive_residual_spread_matches_scale() {
    let d = AdditiveDesign {
        n: 100_000,
        response: AdditiveResponse::Gaussian,
        scale: 2.0,
        weights: WeightSetting::Skewed,
        noise_vars: 3,
        seed: 3,
    };
    let data = gen_additive_mixture(&d).unwrap();
    let x1 = data.covariates.numeric("x1").unwrap();
    let x2 = data.covariates.numeric("x2").unwrap();
    let n = data.y.len() as f64;
    let res: Vec<f64> = (0..data.y.len())
        .map(|i| data.y[i] - additive_eta(data.labels[i], x1[i], x2[i]))
        .collect();
    let mean = res.iter().sum::<f64>() / n;
    let sd = (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((sd - 2.0).abs() < 0.02, "{sd}");
    assert_eq!(data.covariates.names().len(), 5);
}

#[test]
fn generators_are_reproducible() {
    let designs = [
        SimDesign::Linear(LinearDesign { n: 300, m: 3, p_m: 2, family: Family::Laplace, seed: 11 }),
        SimDesign::Additive(AdditiveDesign {
            n: 300,
            response: AdditiveResponse::Poisson,
            scale: 4.0,
            weights: WeightSetting::Uniform,
            noise_vars: 10,
            seed: 11,
        }),
        SimDesign::Overfit(OverfitDesign { n: 300, seed: 11 }),
    ];
    for d in designs {
        let a = d.generate().unwrap();
        assert_eq!(a, d.generate().unwrap());
        let b = a.resample(12).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.y, b.y);
    }
}

#[test]
fn grid_violations_name_the_legal_set() {
    let d = SimDesign::Linear(LinearDesign { n: 301, m: 2, p_m: 2, family: Family::Normal, seed: 0 });
    let msg = d.check_grid().unwrap_err().to_string();
    assert!(msg.contains("[300, 2500]"), "{msg}");
}

/// Weighted least squares of `y` on `[1, x...]`.
fn wls(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut xtx = DMatrix::zeros(x.ncols(), x.ncols());
    let mut xty = DVector::zeros(x.ncols());
    for i in 0..n {
        let r = x.row(i);
        xtx += w[i] * r.transpose() * r;
        xty += w[i] * y[i] * r.transpose();
    }
    xtx.cholesky().unwrap().solve(&xty).iter().copied().collect()
}

#[test]
fn oracle_location_solves_weighted_least_squares() {
    let d = LinearDesign { n: 2500, m: 2, p_m: 2, family: Family::Normal, seed: 4 };
    let data = gen_linear_mixture(&d).unwrap();
    let oracle = oracle_fit(&data).unwrap();
    for (model, psi) in &oracle.components {
        let t = model.predict_training(psi).unwrap();
        let n = model.nrows();
        let table = rebuild_table(model);
        let (x1, x2) = (table.numeric("x1").unwrap(), table.numeric("x2").unwrap());
        let design = DMatrix::from_fn(n, 3, |i, j| [1.0, x1[i], x2[i]][j]);
        let w: Vec<f64> = t.theta[0][1].iter().map(|s| 1.0 / (s * s)).collect();
        let beta = wls(&design, model.y(), &w);
        for (a, b) in beta.iter().zip(&psi.0[..3]) {
            assert!((a - b).abs() < 1e-4, "{beta:?} vs {:?}", &psi.0[..3]);
        }
    }
}

fn rebuild_table(model: &MixtureModel) -> DataTable {
    // the linear block columns of the location design are the raw covariates
    let z = &model.design().design_of(0).rows;
    DataTable::new()
        .with_numeric("x1", (0..z.nrows).map(|i| z.row(i)[1]).collect())
        .unwrap()
        .with_numeric("x2", (0..z.nrows).map(|i| z.row(i)[2]).collect())
        .unwrap()
}

#[test]
fn em_recovers_well_separated_mixture() {
    let n = 2500;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let z = Normal::new(0.0, 1.0).unwrap();
    let x1: Vec<f64> = (0..n).map(|_| z.sample(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| z.sample(&mut rng)).collect();
    // location (b0, b1, b2) and log-scale (g0, g1, g2) per component
    let truth = [[4.0, 1.0, -1.0, -0.5, 0.2, -0.1], [-4.0, -0.5, 1.5, -0.2, -0.1, 0.2]];
    let pi = [0.4, 0.6];
    let mut labels = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = usize::from(!rng.random_bool(pi[0]));
        let t = &truth[c];
        let mu = t[0] + t[1] * x1[i] + t[2] * x2[i];
        let sd = (t[3] + t[4] * x1[i] + t[5] * x2[i]).exp();
        labels.push(c);
        y.push(mu + sd * z.sample(&mut rng));
    }
    let covariates = DataTable::new().with_numeric("x1", x1).unwrap().with_numeric("x2", x2).unwrap();
    let spec = linear_spec(Family::Normal, 2, 2);
    let mut psi = truth.concat();
    psi.extend(pi.iter().map(|p: &f64| p.ln()));
    let data = SimDataset {
        design: SimDesign::Linear(LinearDesign { n, m: 2, p_m: 2, family: Family::Normal, seed: 21 }),
        covariates,
        y,
        labels,
        truth: Truth { spec: spec.clone(), psi: Some(ParamVector(psi)), pi: pi.to_vec() },
    };
    let oracle = oracle_fit(&data).unwrap();
    let reference = ComparableParams { component_coefs: oracle.component_coefs(), pi: oracle.pi.clone() };

    let model = MixtureModel::new(spec, &data.covariates, data.y.clone()).unwrap();
    let fit = em_fit(&model, &EmConfig { restarts: 5, seed: 3, ..Default::default() }).unwrap();
    let best = fit.best_or_err().unwrap();
    let est = ComparableParams::from_fit(&model, &best.psi).unwrap();
    let labels = model.responsibilities(&best.psi, &model.all_rows()).unwrap().map_labels();
    let a = assignment_with_sizes(&data.labels, &labels, 2, 2);
    let rmse = coefficient_rmse(&reference, &est, &a).unwrap();
    assert!(rmse < 0.1, "{rmse}");
}
