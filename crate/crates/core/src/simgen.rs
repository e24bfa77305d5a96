//! Seeded generators for the simulation designs and their oracle fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::families::Family;
use crate::mixture::MixtureModel;
use crate::predictors::{ComponentSpec, DesignSet, ModelSpec, ParamVector, PredictorSpec, SmoothSpec};
use crate::scoring::score_component;

/// Smallest mixture weight accepted by the linear-mixture generator.
pub const MIN_WEIGHT: f64 = 0.03;
/// Interval for the first weight of the overfitting design.
pub const OVERFIT_PI1: (f64, f64) = (0.06, 0.094);
pub const ADDITIVE_INTERCEPT: f64 = 0.5;

pub const LINEAR_N: [usize; 2] = [300, 2500];
pub const LINEAR_M: [usize; 4] = [2, 3, 5, 10];
pub const LINEAR_PM: [usize; 2] = [2, 10];
pub const ADDITIVE_SCALES: [f64; 2] = [2.0, 4.0];
pub const ADDITIVE_NOISE: [usize; 2] = [3, 10];

/// Linear-mixture design: shared `N(0,1)` covariates, coefficients `U(-2,2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDesign {
    pub n: usize,
    pub m: usize,
    pub p_m: usize,
    pub family: Family,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdditiveResponse {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSetting {
    /// (1/3, 1/3, 1/3)
    Uniform,
    /// (1/10, 3/10, 6/10)
    Skewed,
}

impl WeightSetting {
    pub fn weights(self) -> Vec<f64> {
        match self {
            WeightSetting::Uniform => vec![1.0 / 3.0; 3],
            WeightSetting::Skewed => vec![0.1, 0.3, 0.6],
        }
    }
}

/// Three-component additive mixture on `U(0,1)` covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveDesign {
    pub n: usize,
    pub response: AdditiveResponse,
    /// Gaussian standard deviation, or the Poisson rate multiplier.
    pub scale: f64,
    pub weights: WeightSetting,
    pub noise_vars: usize,
    pub seed: u64,
}

/// Two-component Normal mixture with ten covariates in mean and scale and a
/// small first weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverfitDesign {
    pub n: usize,
    pub seed: u64,
}

impl OverfitDesign {
    pub const P_M: usize = 10;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "lowercase")]
pub enum SimDesign {
    Linear(LinearDesign),
    Additive(AdditiveDesign),
    Overfit(OverfitDesign),
}

impl SimDesign {
    pub fn seed(&self) -> u64 {
        match self {
            SimDesign::Linear(d) => d.seed,
            SimDesign::Additive(d) => d.seed,
            SimDesign::Overfit(d) => d.seed,
        }
    }

    /// Checks the design against the published experiment grid.
    pub fn check_grid(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            SimDesign::Linear(d) => {
                if !LINEAR_N.contains(&d.n) {
                    return fail(format!("n must be one of {LINEAR_N:?}, got {}", d.n));
                }
                if !LINEAR_M.contains(&d.m) {
                    return fail(format!("m must be one of {LINEAR_M:?}, got {}", d.m));
                }
                if !LINEAR_PM.contains(&d.p_m) {
                    return fail(format!("pm must be one of {LINEAR_PM:?}, got {}", d.p_m));
                }
                if d.family == Family::Poisson {
                    return fail("family must be one of [normal, laplace, logistic]".into());
                }
            }
            SimDesign::Additive(d) => {
                if d.n != 2500 {
                    return fail(format!("n must be 2500, got {}", d.n));
                }
                if !ADDITIVE_SCALES.contains(&d.scale) {
                    return fail(format!("scale must be one of {ADDITIVE_SCALES:?}, got {}", d.scale));
                }
                if !ADDITIVE_NOISE.contains(&d.noise_vars) {
                    return fail(format!("noise must be one of {ADDITIVE_NOISE:?}, got {}", d.noise_vars));
                }
            }
            SimDesign::Overfit(d) => {
                if d.n != 2500 {
                    return fail(format!("n must be 2500, got {}", d.n));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SimDataset> {
        match self {
            SimDesign::Linear(d) => gen_linear_mixture(d),
            SimDesign::Additive(d) => gen_additive_mixture(d),
            SimDesign::Overfit(d) => gen_overfit_mixture(d),
        }
    }
}

/// Data-generating truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truth {
    /// Model matching the generating process (for additive designs, the
    /// smooth model one would fit).
    pub spec: ModelSpec,
    /// True coefficients when the process lies in the model class.
    pub psi: Option<ParamVector>,
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub design: SimDesign,
    pub covariates: DataTable,
    pub y: Vec<f64>,
    pub labels: Vec<usize>,
    pub truth: Truth,
}

impl SimDataset {
    pub fn num_components(&self) -> usize {
        self.truth.pi.len()
    }

    /// Covariates plus `y` and `true_label` columns.
    pub fn to_table(&self) -> Result<DataTable> {
        self.covariates
            .clone()
            .with_numeric("y", self.y.clone())?
            .with_numeric("true_label", self.labels.iter().map(|&l| l as f64).collect())
    }

    /// Fresh draw of the same design with another seed, keeping the true
    /// parameters (for test sets).
    pub fn resample(&self, seed: u64) -> Result<SimDataset> {
        let n = self.y.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.design {
            SimDesign::Additive(d) => {
                let mut d = d.clone();
                d.seed = seed;
                gen_additive_mixture(&d)
            }
            _ => {
                let p = covariate_count(&self.covariates);
                let covariates = normal_covariates(n, p, &mut rng)?;
                let psi = self.truth.psi.as_ref().expect("linear designs carry psi");
                draw_from_linear(self.design.clone(), &self.truth.spec, psi, &self.truth.pi, covariates, &mut rng)
            }
        }
    }
}

fn covariate_count(t: &DataTable) -> usize {
    t.names().len()
}

pub fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

fn normal_covariates(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Result<DataTable> {
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    let mut t = DataTable::new();
    for name in covariate_names(p) {
        let v = (0..n).map(|_| z.sample(rng)).collect();
        t = t.with_numeric(name, v)?;
    }
    Ok(t)
}

/// Symmetric Dirichlet(1) draws until every weight is at least `MIN_WEIGHT`.
pub fn draw_weights<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    if m == 1 {
        return vec![1.0];
    }
    loop {
        // normalized unit exponentials are Dirichlet(1, ..., 1)
        let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = e.iter().sum();
        let w: Vec<f64> = e.iter().map(|v| v / total).collect();
        if w.iter().all(|&v| v >= MIN_WEIGHT) {
            return w;
        }
    }
}

/// Linear location-scale mixture over `x1..x_pm` with constant weights.
pub fn linear_spec(family: Family, m: usize, p_m: usize) -> ModelSpec {
    let vars = covariate_names(p_m);
    ModelSpec::homogeneous(family, m, PredictorSpec::linear(&vars))
}

pub fn gen_linear_mixture(d: &LinearDesign) -> Result<SimDataset> {
    if d.family == Family::Poisson {
        return Err(Error::UnsupportedSpec("linear mixtures use location-scale families".into()));
    }
    if d.n == 0 || d.m == 0 {
        return Err(Error::EmptyInput("linear mixture needs n and m"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let pi = draw_weights(d.m, &mut rng);
    let spec = linear_spec(d.family, d.m, d.p_m);
    let psi = draw_linear_psi(&spec, &pi, &mut rng)?;
    let covariates = normal_covariates(d.n, d.p_m, &mut rng)?;
    draw_from_linear(SimDesign::Linear(d.clone()), &spec, &psi, &pi, covariates, &mut rng)
}

/// Coefficients `U(-2,2)` for component parameters, `log pi` as gating intercepts.
fn draw_linear_psi(spec: &ModelSpec, pi: &[f64], rng: &mut ChaCha8Rng) -> Result<ParamVector> {
    // a one-row table is enough to lay out the coefficients
    let p = spec.components[0].params[0].linear.len();
    let mut probe = DataTable::new();
    for name in covariate_names(p) {
        probe = probe.with_numeric(name, vec![0.0])?;
    }
    let layout = DesignSet::build(spec, &probe)?.layout;
    let u = Uniform::new(-2.0, 2.0).expect("valid range");
    let mut psi = ParamVector::zeros(&layout);
    for j in 0..layout.num_dist_params {
        for v in &mut psi.0[layout.predictors[j].range()] {
            *v = u.sample(rng);
        }
    }
    for (c, w) in pi.iter().enumerate() {
        psi.0[layout.predictors[layout.gating_predictor(c)].offset] = w.ln();
    }
    Ok(psi)
}

fn draw_from_linear(
    design: SimDesign,
    spec: &ModelSpec,
    psi: &ParamVector,
    pi: &[f64],
    covariates: DataTable,
    rng: &mut ChaCha8Rng,
) -> Result<SimDataset> {
    let n = covariates.nrows();
    let ds = DesignSet::build(spec, &covariates)?;
    let eta = ds.eval_eta(psi)?;
    let families = spec.families();
    let cat = rand_distr::weighted::WeightedIndex::new(pi).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut labels = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = cat.sample(rng);
        let f = families[c];
        let off: usize = families[..c].iter().map(|f| f.param_count()).sum();
        let theta: Vec<f64> = f
            .transforms()
            .iter()
            .enumerate()
            .map(|(k, t)| t.apply(eta[off + k][i]))
            .collect();
        labels.push(c);
        y.push(f.sample(&theta, rng)?);
    }
    Ok(SimDataset {
        design,
        covariates,
        y,
        labels,
        truth: Truth {
            spec: spec.clone(),
            psi: Some(psi.clone()),
            pi: pi.to_vec(),
        },
    })
}

pub fn f1(x: f64) -> f64 {
    2.0 * (3.0 * x).sin()
}

pub fn f2(x: f64) -> f64 {
    (2.0 * x).exp()
}

pub fn f3(x: f64) -> f64 {
    0.2 * x.powi(11) * (10.0 * (1.0 - x)).powi(6) + 10.0 * (10.0 * x).powi(3) * (1.0 - x).powi(10)
}

/// Noise-free predictor of component `m` (0-based) of the additive design.
pub fn additive_eta(m: usize, x1: f64, x2: f64) -> f64 {
    ADDITIVE_INTERCEPT
        + match m {
            0 => f1(x1) + f2(x2),
            1 => f2(x1) + x2,
            _ => x1 + f3(x2),
        }
}

/// Model fitted to the additive designs: smooth location in every covariate,
/// constant scale and weights.
pub fn additive_spec(response: AdditiveResponse, noise_vars: usize, df: f64) -> ModelSpec {
    let vars = covariate_names(2 + noise_vars);
    let mut location = PredictorSpec::intercept_only();
    for v in &vars {
        location = location.with_smooth(SmoothSpec::new(v.clone(), BasisConfig::default()));
    }
    let component = match response {
        AdditiveResponse::Gaussian => {
            ComponentSpec::new(Family::Normal, vec![location, PredictorSpec::intercept_only()])
        }
        AdditiveResponse::Poisson => ComponentSpec::new(Family::Poisson, vec![location]),
    };
    ModelSpec::new(vec![component; 3], PredictorSpec::intercept_only()).with_default_df(df)
}

pub fn gen_additive_mixture(d: &AdditiveDesign) -> Result<SimDataset> {
    if !(d.scale > 0.0) {
        return Err(Error::InvalidSpec(format!("scale must be positive, got {}", d.scale)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let u = Uniform::new(0.0, 1.0).expect("valid range");
    let p = 2 + d.noise_vars;
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..d.n).map(|_| u.sample(&mut rng)).collect()).collect();
    let pi = d.weights.weights();
    let cat = rand_distr::weighted::WeightedIndex::new(&pi).expect("valid weights");
    let mut labels = Vec::with_capacity(d.n);
    let mut y = Vec::with_capacity(d.n);
    for i in 0..d.n {
        let c = cat.sample(&mut rng);
        let eta = additive_eta(c, cols[0][i], cols[1][i]);
        let v = match d.response {
            AdditiveResponse::Gaussian => Family::Normal.sample(&[eta, d.scale], &mut rng)?,
            AdditiveResponse::Poisson => Family::Poisson.sample(&[d.scale * eta.exp()], &mut rng)?,
        };
        labels.push(c);
        y.push(v);
    }
    let mut covariates = DataTable::new();
    for (name, col) in covariate_names(p).into_iter().zip(cols) {
        covariates = covariates.with_numeric(name, col)?;
    }
    let df = match d.response {
        AdditiveResponse::Gaussian => 10.0,
        AdditiveResponse::Poisson => 6.0,
    };
    Ok(SimDataset {
        design: SimDesign::Additive(d.clone()),
        covariates,
        y,
        labels,
        truth: Truth {
            spec: additive_spec(d.response, d.noise_vars, df),
            psi: None,
            pi,
        },
    })
}

pub fn gen_overfit_mixture(d: &OverfitDesign) -> Result<SimDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let (lo, hi) = OVERFIT_PI1;
    let pi1 = loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            break v;
        }
    };
    let pi = vec![pi1, 1.0 - pi1];
    let spec = linear_spec(Family::Normal, 2, OverfitDesign::P_M);
    let psi = draw_linear_psi(&spec, &pi, &mut rng)?;
    let covariates = normal_covariates(d.n, OverfitDesign::P_M, &mut rng)?;
    draw_from_linear(SimDesign::Overfit(d.clone()), &spec, &psi, &pi, covariates, &mut rng)
}

/// Reference fit that knows the labels.
#[derive(Debug, Clone)]
pub struct OracleFit {
    /// Single-component model and its fitted coefficients, per true component.
    pub components: Vec<(MixtureModel, ParamVector)>,
    pub pi: Vec<f64>,
}

impl OracleFit {
    /// Log predictive density of the oracle mixture at new rows.
    pub fn predict_log_density(&self, table: &DataTable, y: &[f64]) -> Result<Vec<f64>> {
        let mut per: Vec<Vec<f64>> = Vec::with_capacity(self.components.len());
        for (model, psi) in &self.components {
            per.push(model.predict_log_density(psi, table, y)?.0);
        }
        Ok((0..y.len())
            .map(|i| {
                let a: Vec<f64> = per.iter().zip(&self.pi).map(|(ld, p)| p.ln() + ld[i]).collect();
                crate::mixture::log_sum_exp(&a)
            })
            .collect())
    }

    /// Component coefficients in the layout of the single-component models.
    pub fn component_coefs(&self) -> Vec<Vec<f64>> {
        self.components
            .iter()
            .map(|(model, psi)| {
                let k = model.layout().num_dist_params;
                (0..k).flat_map(|j| psi.predictor(model.layout(), j).to_vec()).collect()
            })
            .collect()
    }
}

/// Fits every true component separately on its own rows by penalized
/// Fisher scoring, with weights set to the label frequencies.
pub fn oracle_fit(data: &SimDataset) -> Result<OracleFit> {
    let m = data.num_components();
    let mut components = Vec::with_capacity(m);
    let mut pi = Vec::with_capacity(m);
    for c in 0..m {
        let rows: Vec<usize> = (0..data.y.len()).filter(|&i| data.labels[i] == c).collect();
        let component = data.truth.spec.components[c].clone();
        let spec = ModelSpec {
            components: vec![component],
            gating: PredictorSpec::intercept_only(),
            xi: 0.0,
            default_df: data.truth.spec.default_df,
        };
        let width_needed: usize = spec.components[0]
            .params
            .iter()
            .map(|p| 1 + p.linear.len() + p.smooth.len())
            .sum();
        if rows.len() <= width_needed {
            return Err(Error::InvalidSpec(format!(
                "component {} has {} rows, too few for its parameters",
                c + 1,
                rows.len()
            )));
        }
        let table = data.covariates.select_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
        let model = MixtureModel::new(spec, &table, y)?;
        let mut psi = ParamVector::zeros(model.layout());
        let family = model.families()[0];
        let mean = model.y().iter().sum::<f64>() / rows.len() as f64;
        let first = model.layout().predictors[0].offset;
        psi.0[first] = if family == Family::Poisson { mean.max(1e-3).ln() } else { mean };
        if family.param_count() == 2 {
            let sd = (model.y().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows.len() as f64).sqrt();
            psi.0[model.layout().predictors[1].offset] = sd.max(1e-3).ln();
        }
        let weights = vec![1.0; rows.len()];
        score_component(&model, 0, &weights, &mut psi, 500, 1e-10)?;
        pi.push(rows.len() as f64 / data.y.len() as f64);
        components.push((model, psi));
    }
    Ok(OracleFit { components, pi })
}
