//! Simulation experiments shared by `mixreg benchmark` and the acceptance suite.

use std::time::Instant;

use mixreg::em::{em_fit, EmConfig};
use mixreg::metrics::{
    accuracy_under, adjusted_rand_index, assignment_with_sizes, coefficient_rmse, predictive_log_score,
    ComparableParams, LabelAssignment,
};
use mixreg::simgen::{
    additive_eta, covariate_names, AdditiveDesign, AdditiveResponse, SimDataset, SimDesign,
};
use mixreg::{fit, DataTable, Family, MixtureModel, ModelSpec, OptimConfig, ParamVector, Result};

/// Offset between a training seed and the seed of its independent test draw.
pub const TEST_SEED_OFFSET: u64 = 1000;
/// Points on the diagonal grid used to compare additive curves.
pub const CURVE_POINTS: usize = 200;

/// Training data, an independent test draw from the same truth, and a model
/// bound to the training rows.
pub struct Trial {
    pub data: SimDataset,
    pub test: SimDataset,
    pub model: MixtureModel,
}

impl Trial {
    /// Fits the generating model class, or `spec` when given.
    pub fn new(design: &SimDesign, spec: Option<ModelSpec>) -> Result<Self> {
        let data = design.generate()?;
        let test = data.resample(design.seed() + TEST_SEED_OFFSET)?;
        let spec = spec.unwrap_or_else(|| data.truth.spec.clone());
        let model = MixtureModel::new(spec, &data.covariates, data.y.clone())?;
        Ok(Trial { data, test, model })
    }

    pub fn num_true(&self) -> usize {
        self.data.num_components()
    }

    pub fn labels(&self, psi: &ParamVector) -> Result<Vec<usize>> {
        Ok(self.model.responsibilities(psi, &self.model.all_rows())?.map_labels())
    }

    pub fn assignment(&self, psi: &ParamVector) -> Result<LabelAssignment> {
        let labels = self.labels(psi)?;
        Ok(assignment_with_sizes(
            &self.data.labels,
            &labels,
            self.num_true(),
            self.model.num_components(),
        ))
    }

    /// True coefficients and weights, when the truth lies in the model class.
    pub fn truth_params(&self) -> Result<Option<ComparableParams>> {
        let Some(psi) = &self.data.truth.psi else {
            return Ok(None);
        };
        let tm = MixtureModel::new(self.data.truth.spec.clone(), &self.data.covariates, self.data.y.clone())?;
        let mut p = ComparableParams::from_fit(&tm, psi)?;
        p.pi = self.data.truth.pi.clone();
        Ok(Some(p))
    }

    pub fn score(&self, psi: &ParamVector) -> Result<Scores> {
        let labels = self.labels(psi)?;
        let a = assignment_with_sizes(&self.data.labels, &labels, self.num_true(), self.model.num_components());
        let rmse = match self.truth_params()? {
            Some(truth) if truth.num_components() == self.model.num_components() => {
                let est = ComparableParams::from_fit(&self.model, psi)?;
                Some(coefficient_rmse(&truth, &est, &a)?)
            }
            _ => None,
        };
        Ok(Scores {
            rmse,
            pls: predictive_log_score(&self.model, psi, &self.test.covariates, &self.test.y)?,
            ari: adjusted_rand_index(&self.data.labels, &labels)?,
            accuracy: accuracy_under(&self.data.labels, &labels, &a),
            pi_bar: self.model.mean_weights(psi, &self.model.all_rows())?,
        })
    }

    /// Test log score of a single Normal with the training mean and standard
    /// deviation, the intercept-only `M = 1` fit in closed form.
    pub fn baseline_pls(&self) -> f64 {
        let y = &self.data.y;
        let n = y.len() as f64;
        let mu = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        let ld: f64 = self
            .test
            .y
            .iter()
            .map(|&v| Family::Normal.log_density(v, &[mu, sd]).unwrap_or(f64::NEG_INFINITY))
            .sum();
        ld / self.test.y.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub rmse: Option<f64>,
    pub pls: f64,
    pub ari: f64,
    pub accuracy: f64,
    pub pi_bar: Vec<f64>,
}

/// Outcome of one method on one trial; `scores` is `None` when it failed.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub psi: Option<ParamVector>,
    pub scores: Option<Scores>,
    pub seconds: f64,
    pub failed_restarts: usize,
    pub restarts: usize,
    pub error: Option<String>,
}

impl MethodRun {
    fn from_result(r: Result<(ParamVector, usize, usize)>, trial: &Trial, start: Instant) -> Result<Self> {
        let (psi, scores, failed_restarts, restarts, error) = match r {
            Ok((psi, failed, total)) => {
                let s = trial.score(&psi)?;
                (Some(psi), Some(s), failed, total, None)
            }
            Err(e @ (mixreg::Error::AllRestartsDiverged { .. } | mixreg::Error::Numerical(_))) => {
                (None, None, 0, 0, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        Ok(MethodRun {
            psi,
            scores,
            seconds: start.elapsed().as_secs_f64(),
            failed_restarts,
            restarts,
            error,
        })
    }
}

pub fn run_nmdr(trial: &Trial, cfg: &OptimConfig) -> Result<MethodRun> {
    let start = Instant::now();
    let r = fit(&trial.model, cfg, None).map(|f| (f.psi, f.diverged_restarts, f.restarts.len()));
    MethodRun::from_result(r, trial, start)
}

/// EM from random starts. A run whose restarts all fail reports no scores.
pub fn run_em(trial: &Trial, cfg: &EmConfig) -> Result<MethodRun> {
    let start = Instant::now();
    let r = em_fit(&trial.model, cfg).and_then(|f| {
        let failed = f.failed_runs();
        let total = f.runs.len();
        f.best_or_err().map(|b| (b.psi.clone(), failed, total))
    });
    MethodRun::from_result(r, trial, start)
}

/// Diagonal covariate grid `x1 = x2 = t` on `[0, 1]`, other covariates at 0.5.
pub fn diagonal_grid(p: usize) -> Result<(Vec<f64>, DataTable)> {
    let t: Vec<f64> = (0..CURVE_POINTS).map(|i| i as f64 / (CURVE_POINTS - 1) as f64).collect();
    let mut table = DataTable::new();
    for (k, name) in covariate_names(p).into_iter().enumerate() {
        let col = if k < 2 { t.clone() } else { vec![0.5; CURVE_POINTS] };
        table = table.with_numeric(name, col)?;
    }
    Ok((t, table))
}

/// RMSE between each true additive curve and its matched fitted curve on the
/// diagonal grid, on the predictor scale. Smooths of the noise covariates are
/// replaced by their average effect, which is zero under the sum-to-zero
/// constraint. Unmatched true components get `inf`.
pub fn additive_curve_rmse(
    model: &MixtureModel,
    psi: &ParamVector,
    design: &AdditiveDesign,
    assignment: &LabelAssignment,
) -> Result<Vec<f64>> {
    let p = 2 + design.noise_vars;
    let mut signal = psi.clone();
    let layout = model.layout();
    for j in 0..layout.predictors.len() {
        for v in covariate_names(p).iter().skip(2) {
            if let Some(r) = layout.term_range(j, &format!("s({v})")) {
                signal.0[r].iter_mut().for_each(|c| *c = 0.0);
            }
        }
    }
    let (t, grid) = diagonal_grid(p)?;
    let pred = model.predict(&signal, &grid)?;
    let offset = match design.response {
        AdditiveResponse::Gaussian => None,
        AdditiveResponse::Poisson => Some(design.scale.ln()),
    };
    Ok((0..assignment.num_true)
        .map(|truth| {
            let Some(k) = assignment.source(truth).filter(|&k| k < model.num_components()) else {
                return f64::INFINITY;
            };
            let sq: f64 = t
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let theta = pred.theta[k][0][i];
                    let eta = match offset {
                        None => theta,
                        Some(o) => theta.ln() - o,
                    };
                    (eta - additive_eta(truth, x, x)).powi(2)
                })
                .sum();
            (sq / t.len() as f64).sqrt()
        })
        .collect())
}

/// Whether estimated weights match their true components within `tol` and
/// every unmatched component has weight below `floor`.
pub fn weights_recovered(pi_bar: &[f64], truth: &[f64], a: &LabelAssignment, tol: f64, floor: f64) -> bool {
    pi_bar.iter().enumerate().all(|(k, &p)| match a.target(k) {
        Some(t) => (p - truth[t]).abs() < tol,
        None => p < floor,
    })
}

/// Median of the finite values; `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
