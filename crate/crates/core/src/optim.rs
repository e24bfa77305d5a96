//! Mini-batch first-order fitting with early stopping and restarts.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::predictors::{BlockBasis, DesignSet, ParamLayout, ParamVector};

pub const EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimMethod {
    Sgd,
    Rmsprop,
    Adam,
    Adadelta,
}

impl OptimMethod {
    pub const ALL: [OptimMethod; 4] = [
        OptimMethod::Sgd,
        OptimMethod::Rmsprop,
        OptimMethod::Adam,
        OptimMethod::Adadelta,
    ];

    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimMethod::Sgd => 0.01,
            OptimMethod::Rmsprop | OptimMethod::Adam => 0.001,
            OptimMethod::Adadelta => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimMethod::Sgd => "sgd",
            OptimMethod::Rmsprop => "rmsprop",
            OptimMethod::Adam => "adam",
            OptimMethod::Adadelta => "adadelta",
        }
    }
}

impl std::fmt::Display for OptimMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Triangular cyclic learning rate; `period` is the full cycle length in steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclicLr {
    pub base: f64,
    pub max: f64,
    pub period: usize,
}

impl CyclicLr {
    pub fn rate(&self, step: usize) -> f64 {
        let phase = (step % self.period) as f64 / self.period as f64;
        let tri = 1.0 - (2.0 * phase - 1.0).abs();
        self.base + (self.max - self.base) * tri
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub method: OptimMethod,
    /// Falls back to the method's default when absent.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub restarts: usize,
    pub seed: u64,
    pub cyclic_lr: Option<CyclicLr>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            method: OptimMethod::Adam,
            learning_rate: None,
            batch_size: 32,
            max_epochs: 500,
            patience: 50,
            val_fraction: 0.1,
            restarts: 1,
            seed: 0,
            cyclic_lr: None,
        }
    }
}

impl OptimConfig {
    pub fn lr(&self) -> f64 {
        self.learning_rate.unwrap_or_else(|| self.method.default_learning_rate())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr() > 0.0) || !self.lr().is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.lr()));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be positive".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return bad(format!("val_fraction must lie in (0, 0.5), got {}", self.val_fraction));
        }
        if let Some(c) = &self.cyclic_lr {
            if !(c.base > 0.0 && c.max >= c.base && c.max.is_finite()) || c.period == 0 {
                return bad("cyclic_lr needs 0 < base <= max and a positive period".into());
            }
        }
        Ok(())
    }

    fn rate(&self, step: usize) -> f64 {
        match &self.cyclic_lr {
            Some(c) => c.rate(step),
            None => self.lr(),
        }
    }
}

/// Xavier-uniform draws per term, `a = sqrt(6 / (width + 1))`; intercepts start at zero.
pub fn init_xavier<R: Rng + ?Sized>(design: &DesignSet, rng: &mut R) -> ParamVector {
    let layout: &ParamLayout = &design.layout;
    let mut psi = ParamVector::zeros(layout);
    for (j, p) in layout.predictors.iter().enumerate() {
        for block in &design.design_of(j).blocks {
            if matches!(block.basis, BlockBasis::Intercept) {
                continue;
            }
            let a = (6.0 / (block.width() as f64 + 1.0)).sqrt();
            for c in block.columns.clone() {
                psi.0[p.offset + c] = rng.random_range(-a..=a);
            }
        }
    }
    psi
}

/// Method-specific accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub method: OptimMethod,
    pub t: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimState {
    pub fn new(method: OptimMethod, len: usize) -> Self {
        let first = match method {
            OptimMethod::Adam | OptimMethod::Adadelta => vec![0.0; len],
            _ => Vec::new(),
        };
        let second = match method {
            OptimMethod::Sgd => Vec::new(),
            _ => vec![0.0; len],
        };
        OptimState {
            method,
            t: 0,
            first,
            second,
        }
    }

    /// One update of `psi` in place.
    pub fn step(&mut self, psi: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        match self.method {
            OptimMethod::Sgd => {
                for (p, g) in psi.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimMethod::Rmsprop => {
                const RHO: f64 = 0.9;
                for ((p, g), v) in psi.iter_mut().zip(grad).zip(&mut self.second) {
                    *v = RHO * *v + (1.0 - RHO) * g * g;
                    *p -= lr * g / (v.sqrt() + EPSILON);
                }
            }
            OptimMethod::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                let c1 = 1.0 - B1.powi(self.t as i32);
                let c2 = 1.0 - B2.powi(self.t as i32);
                for (((p, g), m), v) in psi.iter_mut().zip(grad).zip(&mut self.first).zip(&mut self.second) {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
                }
            }
            OptimMethod::Adadelta => {
                const RHO: f64 = 0.95;
                for (((p, g), dx2), g2) in psi.iter_mut().zip(grad).zip(&mut self.first).zip(&mut self.second) {
                    *g2 = RHO * *g2 + (1.0 - RHO) * g * g;
                    let dx = -((*dx2 + EPSILON).sqrt() / (*g2 + EPSILON).sqrt()) * g;
                    *dx2 = RHO * *dx2 + (1.0 - RHO) * dx * dx;
                    *p += lr * dx;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartSummary {
    pub index: usize,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Best per-observation validation objective, `None` if the restart diverged first.
    pub best_val_objective: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub psi: ParamVector,
    /// Mean per-observation batch objective in each epoch of the winning restart.
    pub train_trace: Vec<f64>,
    /// Per-observation validation objective after each epoch of the winning restart.
    pub val_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_objective: f64,
    pub restart_index: usize,
    pub restarts: Vec<RestartSummary>,
    pub diverged_restarts: usize,
    pub wall_time: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub val_rows: Vec<usize>,
}

struct RestartOutcome {
    summary: RestartSummary,
    psi: Option<ParamVector>,
    train_trace: Vec<f64>,
    val_trace: Vec<f64>,
    val_rows: Vec<usize>,
}

/// Fits `model` from Xavier starts (or from `init` for restart 0) and returns
/// the best snapshot over all epochs of all restarts by validation objective.
pub fn fit(model: &MixtureModel, cfg: &OptimConfig, init: Option<&ParamVector>) -> Result<FitResult> {
    cfg.validate()?;
    if let Some(p) = init {
        model.design().check_psi(p)?;
    }
    let n = model.nrows();
    if n < 4 {
        return Err(Error::EmptyInput("at least four rows are needed to fit"));
    }
    let start = Instant::now();
    let mut warnings = Vec::new();
    if n < 2 * cfg.batch_size {
        warnings.push(format!("only {n} rows for batch size {}", cfg.batch_size));
    }
    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(model, cfg, r, if r == 0 { init } else { None }))
        .collect();

    let diverged_restarts = outcomes.iter().filter(|o| o.summary.diverged).count();
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.summary.diverged && o.psi.is_some())
        .min_by(|(_, a), (_, b)| {
            let (a, b) = (a.summary.best_val_objective.unwrap(), b.summary.best_val_objective.unwrap());
            a.total_cmp(&b)
        })
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(Error::AllRestartsDiverged { restarts: cfg.restarts });
    };
    let summaries = outcomes.iter().map(|o| o.summary.clone()).collect();
    let mut outcomes = outcomes;
    let win = outcomes.swap_remove(best);
    Ok(FitResult {
        psi: win.psi.expect("non-diverged restart has a snapshot"),
        train_trace: win.train_trace,
        val_trace: win.val_trace,
        best_epoch: win.summary.best_epoch,
        best_val_objective: win.summary.best_val_objective.unwrap(),
        restart_index: win.summary.index,
        restarts: summaries,
        diverged_restarts,
        wall_time: start.elapsed().as_secs_f64(),
        warnings,
        val_rows: win.val_rows,
    })
}

fn run_restart(model: &MixtureModel, cfg: &OptimConfig, r: usize, init: Option<&ParamVector>) -> RestartOutcome {
    let seed = cfg.seed.wrapping_add(r as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut val_rows = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val_rows.sort_unstable();
    train.sort_unstable();

    let mut model = model.clone();
    model.set_fit_rows(train.len());
    let mut psi = match init {
        Some(p) => p.clone(),
        None => init_xavier(model.design(), &mut rng),
    };
    let mut state = OptimState::new(cfg.method, psi.len());
    let mut grad = vec![0.0; psi.len()];
    let mut summary = RestartSummary {
        index: r,
        seed,
        epochs: 0,
        best_epoch: 0,
        best_val_objective: None,
        diverged: false,
    };
    let mut best_psi = None;
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    let mut train_trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut step = 0usize;

    'epochs: for epoch in 0..cfg.max_epochs {
        train.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in train.chunks(cfg.batch_size) {
            let value = match model.objective_and_gradient(&psi, batch, &mut grad) {
                Ok(v) => v,
                Err(_) => f64::NAN,
            };
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                summary.diverged = true;
                break 'epochs;
            }
            epoch_total += value;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            state.step(&mut psi.0, &grad, cfg.rate(step));
            step += 1;
        }
        summary.epochs = epoch + 1;
        let val = model
            .objective(&psi, &val_rows)
            .map(|v| v / val_rows.len() as f64)
            .unwrap_or(f64::NAN);
        if !val.is_finite() || psi.0.iter().any(|p| !p.is_finite()) {
            summary.diverged = true;
            break;
        }
        train_trace.push(epoch_total / train.len() as f64);
        val_trace.push(val);
        if val < best_val {
            best_val = val;
            best_psi = Some(psi.clone());
            summary.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    if best_psi.is_some() {
        summary.best_val_objective = Some(best_val);
    }
    RestartOutcome {
        summary,
        psi: best_psi,
        train_trace,
        val_trace,
        val_rows,
    }
}
