//! EM baseline for mixtures with constant weights and linear predictors.
//!
//! The M-step sets the weights to the mean responsibilities. A Normal
//! location is refit by weighted least squares at the current scales; every
//! other coefficient takes a short run of full-batch Adam on the weighted
//! component likelihood, so the algorithm is a generalized EM.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::families::Family;
use crate::mixture::MixtureModel;
use crate::optim::{OptimMethod, OptimState};
use crate::predictors::ParamVector;

/// Components whose weight falls below this are treated as collapsed.
pub const COLLAPSE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub restarts: usize,
    /// Adam steps per component and M-step.
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-6,
            restarts: 20,
            inner_steps: 25,
            inner_lr: 0.05,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.restarts == 0 || self.inner_steps == 0 {
            return Err(Error::InvalidConfig(
                "max_iter, restarts and inner_steps must be positive".into(),
            ));
        }
        if !(self.inner_lr > 0.0 && self.inner_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("inner_lr must be positive, got {}", self.inner_lr)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmFailure {
    NonFiniteLikelihood,
    ComponentCollapse { component: usize },
    SingularDesign { component: usize },
    MaxIterations,
}

impl std::fmt::Display for EmFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmFailure::NonFiniteLikelihood => write!(f, "non-finite likelihood"),
            EmFailure::ComponentCollapse { component } => write!(f, "component {} collapsed", component + 1),
            EmFailure::SingularDesign { component } => {
                write!(f, "weighted design of component {} is singular", component + 1)
            }
            EmFailure::MaxIterations => write!(f, "no convergence within max_iter"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmRun {
    pub restart: usize,
    pub seed: u64,
    pub psi: ParamVector,
    /// Observed-data log-likelihood after each iteration.
    pub loglik_trace: Vec<f64>,
    pub failure: Option<EmFailure>,
}

impl EmRun {
    pub fn converged(&self) -> bool {
        self.failure.is_none()
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn iterations(&self) -> usize {
        self.loglik_trace.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmFit {
    /// Converged run with the highest log-likelihood.
    pub best: Option<EmRun>,
    pub runs: Vec<EmRun>,
    pub wall_time: f64,
}

impl EmFit {
    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| !r.converged()).count()
    }

    pub fn best_or_err(&self) -> Result<&EmRun> {
        self.best.as_ref().ok_or_else(|| {
            Error::Numerical(format!("EM failed in all {} restarts", self.runs.len()))
        })
    }
}

/// Per-iteration log-likelihood of the selected run.
pub fn loglik_trace(fit: &EmFit) -> &[f64] {
    fit.best.as_ref().map_or(&[], |r| r.loglik_trace.as_slice())
}

pub fn check_supported(model: &MixtureModel) -> Result<()> {
    let spec = model.spec();
    if !spec.gating.is_intercept_only() {
        return Err(Error::UnsupportedSpec("EM needs intercept-only gating".into()));
    }
    if spec.has_smooths() {
        return Err(Error::UnsupportedSpec("EM supports linear predictors only".into()));
    }
    Ok(())
}

/// Fits with `cfg.restarts` random starts and keeps the best converged run.
pub fn em_fit(model: &MixtureModel, cfg: &EmConfig) -> Result<EmFit> {
    check_supported(model)?;
    cfg.validate()?;
    let start = Instant::now();
    let runs: Vec<EmRun> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut run = match random_partition_start(model, cfg, &mut rng) {
                Ok(psi) => em_iterate(model, cfg, psi),
                Err(failure) => EmRun {
                    restart: 0,
                    seed: 0,
                    psi: ParamVector::zeros(model.layout()),
                    loglik_trace: Vec::new(),
                    failure: Some(failure),
                },
            };
            run.restart = r;
            run.seed = seed;
            run
        })
        .collect();
    let best = runs
        .iter()
        .filter(|r| r.converged())
        .max_by(|a, b| a.loglik().total_cmp(&b.loglik()))
        .cloned();
    Ok(EmFit {
        best,
        runs,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// EM from a given starting point.
pub fn em_from(model: &MixtureModel, cfg: &EmConfig, init: ParamVector) -> Result<EmRun> {
    check_supported(model)?;
    cfg.validate()?;
    model.design().check_psi(&init)?;
    Ok(em_iterate(model, cfg, init))
}

/// M-step from a uniformly random hard partition.
fn random_partition_start(model: &MixtureModel, cfg: &EmConfig, rng: &mut ChaCha8Rng) -> Result<ParamVector, EmFailure> {
    let n = model.nrows();
    let m = model.num_components();
    let mut resp = vec![0.0; n * m];
    for i in 0..n {
        resp[i * m + rng.random_range(0..m)] = 1.0;
    }
    let mut psi = ParamVector::zeros(model.layout());
    // start scales at the marginal spread so the first scoring steps are sane
    let y = model.y();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-3);
    let layout = model.layout().clone();
    for (c, f) in model.families().iter().enumerate() {
        let off = model.param_offset(c);
        let first = layout.predictors[off].offset;
        psi.0[first] = match f {
            crate::families::Family::Poisson => mean.max(1e-3).ln(),
            _ => mean,
        };
        if f.param_count() == 2 {
            psi.0[layout.predictors[off + 1].offset] = sd.ln();
        }
    }
    m_step(model, cfg, &resp, &mut psi)?;
    Ok(psi)
}

fn m_step(model: &MixtureModel, cfg: &EmConfig, resp: &[f64], psi: &mut ParamVector) -> Result<(), EmFailure> {
    let n = model.nrows();
    let m = model.num_components();
    let layout = model.layout().clone();
    let mut weights = vec![0.0; n];
    let mut pi = vec![0.0; m];
    for c in 0..m {
        for i in 0..n {
            weights[i] = resp[i * m + c];
        }
        pi[c] = weights.iter().sum::<f64>() / n as f64;
        if pi[c] < COLLAPSE_THRESHOLD {
            return Err(EmFailure::ComponentCollapse { component: c });
        }
        let off = model.param_offset(c);
        let np = model.families()[c].param_count();
        let numeric = if model.families()[c] == Family::Normal {
            weighted_least_squares(model, c, &weights, psi)?;
            if model.spec().components[c].params[1].is_intercept_only() {
                weighted_scale(model, c, &weights, psi)?;
                off + 2..off + 2
            } else {
                off + 1..off + np
            }
        } else {
            off..off + np
        };
        adam_steps(model, cfg, c, &weights, psi, numeric)?;
    }
    for c in 0..m {
        let r = layout.term_range(layout.gating_predictor(c), "(Intercept)").expect("gating intercept");
        psi.0[r.start] = pi[c].ln();
    }
    Ok(())
}

/// Refits the location of Normal component `c` with weights `w_i / sigma_i^2`.
fn weighted_least_squares(model: &MixtureModel, c: usize, weights: &[f64], psi: &mut ParamVector) -> Result<(), EmFailure> {
    let off = model.param_offset(c);
    let layout = model.layout();
    let rows = model.training_rows();
    let pred = &layout.predictors[off];
    let z = &rows.designs[rows.design_index[off]];
    let y = model.y();
    let mut xtx = DMatrix::<f64>::zeros(pred.width, pred.width);
    let mut xty = DVector::<f64>::zeros(pred.width);
    for (i, &r) in weights.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let w = r * (-2.0 * rows.eta(layout, &psi.0, off + 1, i)).exp();
        if !w.is_finite() {
            return Err(EmFailure::NonFiniteLikelihood);
        }
        let zi = z.row(i);
        for a in 0..pred.width {
            xty[a] += w * zi[a] * y[i];
            for b in 0..=a {
                xtx[(a, b)] += w * zi[a] * zi[b];
            }
        }
    }
    xtx.fill_upper_triangle_with_lower_triangle();
    let chol = xtx.cholesky().ok_or(EmFailure::SingularDesign { component: c })?;
    let beta = chol.solve(&xty);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(EmFailure::SingularDesign { component: c });
    }
    psi.0[pred.range()].copy_from_slice(beta.as_slice());
    Ok(())
}

/// Weighted MLE of a constant Normal scale given the current location.
fn weighted_scale(model: &MixtureModel, c: usize, weights: &[f64], psi: &mut ParamVector) -> Result<(), EmFailure> {
    let off = model.param_offset(c);
    let layout = model.layout();
    let rows = model.training_rows();
    let y = model.y();
    let (mut ss, mut total) = (0.0, 0.0);
    for (i, &w) in weights.iter().enumerate() {
        ss += w * (y[i] - rows.eta(layout, &psi.0, off, i)).powi(2);
        total += w;
    }
    let log_sd = 0.5 * (ss / total).ln();
    if !log_sd.is_finite() {
        return Err(EmFailure::NonFiniteLikelihood);
    }
    psi.0[layout.predictors[off + 1].offset] = log_sd;
    Ok(())
}

/// Full-batch Adam on the weighted negative log-likelihood of component `c`,
/// restricted to the predictors in `params`.
fn adam_steps(
    model: &MixtureModel,
    cfg: &EmConfig,
    c: usize,
    weights: &[f64],
    psi: &mut ParamVector,
    params: std::ops::Range<usize>,
) -> Result<(), EmFailure> {
    if params.is_empty() {
        return Ok(());
    }
    let family = model.families()[c];
    let off = model.param_offset(c);
    let np = family.param_count();
    let transforms = family.transforms();
    let layout = model.layout();
    let rows = model.training_rows();
    let y = model.y();
    let active: Vec<usize> = weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, _)| i).collect();
    // predictors outside `params` stay fixed, so their eta is computed once
    let mut eta: Vec<[f64; 2]> = active
        .iter()
        .map(|&i| {
            let mut e = [0.0; 2];
            for q in 0..np {
                if !params.contains(&(off + q)) {
                    e[q] = rows.eta(layout, &psi.0, off + q, i);
                }
            }
            e
        })
        .collect();
    let coefs = layout.predictors[params.start].offset..layout.predictors[params.end - 1].range().end;
    let total: f64 = weights.iter().sum();
    let mut state = OptimState::new(OptimMethod::Adam, coefs.len());
    let mut grad = vec![0.0; coefs.len()];
    let mut theta = [0.0; 2];
    let mut score = [0.0; 2];
    for _ in 0..cfg.inner_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (e, &i) in eta.iter_mut().zip(&active) {
            for j in params.clone() {
                e[j - off] = rows.eta(layout, &psi.0, j, i);
            }
            for q in 0..np {
                theta[q] = transforms[q].apply(e[q]);
            }
            family.dlogf_dtheta_into(y[i], &theta[..np], &mut score[..np]);
            for j in params.clone() {
                let q = j - off;
                let d = -weights[i] * score[q] * transforms[q].deriv(e[q]) / total;
                let pred = &layout.predictors[j];
                let zi = rows.designs[rows.design_index[j]].row(i);
                for (g, z) in grad[pred.offset - coefs.start..][..pred.width].iter_mut().zip(zi) {
                    *g += d * z;
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(EmFailure::NonFiniteLikelihood);
        }
        state.step(&mut psi.0[coefs.clone()], &grad, cfg.inner_lr);
    }
    Ok(())
}

fn em_iterate(model: &MixtureModel, cfg: &EmConfig, mut psi: ParamVector) -> EmRun {
    let rows = model.all_rows();
    let mut trace = Vec::new();
    let run = |psi: &mut ParamVector, trace: &mut Vec<f64>| -> Option<EmFailure> {
        let Ok(resp) = model.responsibilities(psi, &rows) else {
            return Some(EmFailure::NonFiniteLikelihood);
        };
        let mut prev = match model.nll(psi, &rows) {
            Ok(v) if v.is_finite() => -v,
            _ => return Some(EmFailure::NonFiniteLikelihood),
        };
        let mut resp = resp.data;
        for _ in 0..cfg.max_iter {
            if let Err(f) = m_step(model, cfg, &resp, psi) {
                return Some(f);
            }
            let ll = match model.nll(psi, &rows) {
                Ok(v) if v.is_finite() => -v,
                _ => return Some(EmFailure::NonFiniteLikelihood),
            };
            trace.push(ll);
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < cfg.tol {
                return None;
            }
            prev = ll;
            match model.responsibilities(psi, &rows) {
                Ok(r) if r.data.iter().all(|v| v.is_finite()) => resp = r.data,
                _ => return Some(EmFailure::NonFiniteLikelihood),
            }
        }
        Some(EmFailure::MaxIterations)
    };
    let failure = run(&mut psi, &mut trace);
    EmRun {
        restart: 0,
        seed: 0,
        psi,
        loglik_trace: trace,
        failure,
    }
}
