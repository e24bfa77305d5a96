//! Mixture likelihood, penalties and their analytic gradient.
//!
//! The minimized objective on a batch `B` of the `n_fit` fitting rows is
//!
//! ```text
//! nll(B) + |B|/n_fit * sum_l lambda_l g_l' P_l g_l + |B| * xi * H(pbar)
//! ```
//!
//! where `pbar` is the batch average of the mixture weights and
//! `H(p) = -sum p log p`. The entropy part is charged per observation so that
//! `xi` has the same meaning for any sample size; it penalizes spread-out
//! weights and drives superfluous components towards zero.

use nalgebra::DVector;

use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::families::{Family, Transform};
use crate::predictors::{DesignRows, DesignSet, ModelSpec, ParamLayout, ParamVector};

/// `log sum exp(a)` by max subtraction. Returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of gating logits.
pub fn mixture_weights(eta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; eta.len()];
    log_softmax_into(eta, &mut out);
    out.iter_mut().for_each(|v| *v = v.exp());
    out
}

fn log_softmax_into(eta: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(eta);
    for (o, e) in out.iter_mut().zip(eta) {
        *o = e - lse;
    }
}

/// `sum p log p` with `0 log 0 = 0`.
pub fn neg_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum()
}

/// Posterior component probabilities, row-major `rows x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub num_components: usize,
    pub data: Vec<f64>,
}

impl Responsibilities {
    pub fn nrows(&self) -> usize {
        self.data.len() / self.num_components
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_components..(i + 1) * self.num_components]
    }

    /// Maximum a posteriori component per row (first index on ties).
    pub fn map_labels(&self) -> Vec<usize> {
        (0..self.nrows()).map(|i| argmax(self.row(i))).collect()
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.nrows() as f64;
        let mut out = vec![0.0; self.num_components];
        for i in 0..self.nrows() {
            for (o, r) in out.iter_mut().zip(self.row(i)) {
                *o += r;
            }
        }
        out.iter_mut().for_each(|v| *v /= n);
        out
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Objective broken into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    /// Negative log-likelihood summed over the batch.
    pub nll: f64,
    /// `sum_l lambda_l g_l' P_l g_l`, unscaled.
    pub smooth_penalty: f64,
    /// `xi * sum pbar log pbar`, a per-observation quantity in `[-xi log M, 0]`.
    pub entropy_term: f64,
    pub batch_size: usize,
    /// Minimized value: `nll + |B|/n_fit * smooth_penalty - |B| * entropy_term`.
    pub total: f64,
}

/// Predicted distribution parameters and weights on some covariate table.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `theta[m][k][i]`: parameter `k` of component `m` at row `i`.
    pub theta: Vec<Vec<Vec<f64>>>,
    /// Row-major `n x M` mixture weights.
    pub pi: Vec<f64>,
    pub extrapolated: Vec<bool>,
}

impl Prediction {
    pub fn weights(&self, i: usize) -> &[f64] {
        let m = self.theta.len();
        &self.pi[i * m..(i + 1) * m]
    }
}

struct Scratch {
    eta: Vec<f64>,
    theta: Vec<f64>,
    log_pi: Vec<f64>,
    log_joint: Vec<f64>,
    score: Vec<f64>,
}

/// A model specification bound to its training design and response.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    spec: ModelSpec,
    design: DesignSet,
    rows: DesignRows,
    y: Vec<f64>,
    families: Vec<Family>,
    /// First distribution-parameter predictor of each component.
    param_offsets: Vec<usize>,
    transforms: Vec<Transform>,
    fit_rows: usize,
}

impl MixtureModel {
    pub fn new(spec: ModelSpec, table: &DataTable, y: Vec<f64>) -> Result<Self> {
        let design = DesignSet::build(&spec, table)?;
        Self::from_design(spec, design, y)
    }

    pub fn from_design(spec: ModelSpec, design: DesignSet, y: Vec<f64>) -> Result<Self> {
        if y.len() != design.nrows {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, design has {}",
                y.len(),
                design.nrows
            )));
        }
        let families = spec.families();
        check_response(&families, &y)?;
        let mut param_offsets = Vec::with_capacity(families.len());
        let mut transforms = Vec::new();
        for f in &families {
            param_offsets.push(transforms.len());
            transforms.extend_from_slice(f.transforms());
        }
        let rows = design.training_rows();
        Ok(MixtureModel {
            fit_rows: y.len(),
            spec,
            design,
            rows,
            y,
            families,
            param_offsets,
            transforms,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.design.layout
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn num_components(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    /// Index of the first distribution-parameter predictor of component `c`.
    pub fn param_offset(&self, c: usize) -> usize {
        self.param_offsets[c]
    }

    pub fn training_rows(&self) -> &DesignRows {
        &self.rows
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.nrows()).collect()
    }

    pub fn xi(&self) -> f64 {
        self.spec.xi
    }

    pub fn set_xi(&mut self, xi: f64) -> Result<()> {
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::InvalidSpec(format!("xi must be non-negative, got {xi}")));
        }
        self.spec.xi = xi;
        Ok(())
    }

    /// Number of rows the smoothness penalty is spread over (the training split).
    pub fn fit_rows(&self) -> usize {
        self.fit_rows
    }

    pub fn set_fit_rows(&mut self, n: usize) {
        self.fit_rows = n.max(1);
    }

    fn check(&self, psi: &ParamVector, batch: &[usize]) -> Result<()> {
        self.design.check_psi(psi)?;
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        if let Some(&i) = batch.iter().find(|&&i| i >= self.nrows()) {
            return Err(Error::DimensionMismatch(format!("row {i} out of range")));
        }
        Ok(())
    }

    fn scratch(&self) -> Scratch {
        let k = self.transforms.len();
        let m = self.num_components();
        Scratch {
            eta: vec![0.0; k + m],
            theta: vec![0.0; k],
            log_pi: vec![0.0; m],
            log_joint: vec![0.0; m],
            score: vec![0.0; 2],
        }
    }

    /// Fills the scratch buffers for one row and returns its log-likelihood.
    fn eval_row(&self, rows: &DesignRows, psi: &[f64], i: usize, y: f64, s: &mut Scratch) -> f64 {
        let layout = &self.design.layout;
        let k = self.transforms.len();
        for (j, e) in s.eta.iter_mut().enumerate() {
            *e = rows.eta(layout, psi, j, i);
        }
        for (j, t) in self.transforms.iter().enumerate() {
            s.theta[j] = t.apply(s.eta[j]);
        }
        log_softmax_into(&s.eta[k..], &mut s.log_pi);
        for (m, f) in self.families.iter().enumerate() {
            let off = self.param_offsets[m];
            let th = &s.theta[off..off + f.param_count()];
            s.log_joint[m] = s.log_pi[m] + f.log_density_unchecked(y, th);
        }
        log_sum_exp(&s.log_joint)
    }

    /// Negative log-likelihood summed over `batch`.
    pub fn nll(&self, psi: &ParamVector, batch: &[usize]) -> Result<f64> {
        self.check(psi, batch)?;
        let mut s = self.scratch();
        let mut total = 0.0;
        for &i in batch {
            total -= self.eval_row(&self.rows, &psi.0, i, self.y[i], &mut s);
        }
        Ok(total)
    }

    pub fn responsibilities(&self, psi: &ParamVector, batch: &[usize]) -> Result<Responsibilities> {
        self.check(psi, batch)?;
        let m = self.num_components();
        let mut s = self.scratch();
        let mut data = Vec::with_capacity(batch.len() * m);
        for &i in batch {
            let ll = self.eval_row(&self.rows, &psi.0, i, self.y[i], &mut s);
            data.extend(s.log_joint.iter().map(|a| (a - ll).exp()));
        }
        Ok(Responsibilities {
            num_components: m,
            data,
        })
    }

    /// Batch-average mixture weights.
    pub fn mean_weights(&self, psi: &ParamVector, batch: &[usize]) -> Result<Vec<f64>> {
        self.check(psi, batch)?;
        let layout = &self.design.layout;
        let k = self.transforms.len();
        let m = self.num_components();
        let mut eta = vec![0.0; m];
        let mut pbar = vec![0.0; m];
        for &i in batch {
            for (c, e) in eta.iter_mut().enumerate() {
                *e = self.rows.eta(layout, &psi.0, k + c, i);
            }
            for (p, w) in pbar.iter_mut().zip(mixture_weights(&eta)) {
                *p += w;
            }
        }
        pbar.iter_mut().for_each(|p| *p /= batch.len() as f64);
        Ok(pbar)
    }

    /// `sum_l lambda_l g_l' P_l g_l` at `psi`.
    pub fn smooth_penalty(&self, psi: &ParamVector) -> f64 {
        self.design
            .penalties()
            .into_iter()
            .map(|(range, pen, lambda)| {
                let g = DVector::from_column_slice(&psi.0[range]);
                lambda * g.dot(&(pen * &g))
            })
            .sum()
    }

    pub fn objective_parts(&self, psi: &ParamVector, batch: &[usize]) -> Result<ObjectiveParts> {
        let nll = self.nll(psi, batch)?;
        let smooth_penalty = self.smooth_penalty(psi);
        let entropy_term = if self.spec.xi > 0.0 {
            self.spec.xi * neg_entropy(&self.mean_weights(psi, batch)?)
        } else {
            0.0
        };
        let b = batch.len() as f64;
        Ok(ObjectiveParts {
            nll,
            smooth_penalty,
            entropy_term,
            batch_size: batch.len(),
            total: nll + b / self.fit_rows as f64 * smooth_penalty - b * entropy_term,
        })
    }

    pub fn objective(&self, psi: &ParamVector, batch: &[usize]) -> Result<f64> {
        Ok(self.objective_parts(psi, batch)?.total)
    }

    pub fn gradient(&self, psi: &ParamVector, batch: &[usize]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; psi.len()];
        self.objective_and_gradient(psi, batch, &mut grad)?;
        Ok(grad)
    }

    /// Objective value with its gradient written into `grad`.
    pub fn objective_and_gradient(&self, psi: &ParamVector, batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        self.check(psi, batch)?;
        if grad.len() != psi.len() {
            return Err(Error::DimensionMismatch("gradient buffer".into()));
        }
        let layout = &self.design.layout;
        let k = self.transforms.len();
        let m = self.num_components();
        let xi = self.spec.xi;
        let b = batch.len();
        let mut s = self.scratch();
        // d objective / d eta per batch row, (K + M) wide
        let mut d_eta = vec![0.0; b * (k + m)];
        let mut pi = if xi > 0.0 { vec![0.0; b * m] } else { Vec::new() };
        let mut nll = 0.0;

        for (bi, &i) in batch.iter().enumerate() {
            let y = self.y[i];
            let ll = self.eval_row(&self.rows, &psi.0, i, y, &mut s);
            nll -= ll;
            let d = &mut d_eta[bi * (k + m)..(bi + 1) * (k + m)];
            for (c, f) in self.families.iter().enumerate() {
                let r = (s.log_joint[c] - ll).exp();
                let pi_c = s.log_pi[c].exp();
                d[k + c] = -(r - pi_c);
                if xi > 0.0 {
                    pi[bi * m + c] = pi_c;
                }
                if r == 0.0 {
                    continue;
                }
                let off = self.param_offsets[c];
                let np = f.param_count();
                f.dlogf_dtheta_into(y, &s.theta[off..off + np], &mut s.score[..np]);
                for p in 0..np {
                    let j = off + p;
                    d[j] = -r * s.score[p] * self.transforms[j].deriv(s.eta[j]);
                }
            }
        }

        let mut entropy_term = 0.0;
        if xi > 0.0 {
            let mut pbar = vec![0.0; m];
            for row in pi.chunks(m) {
                for (p, v) in pbar.iter_mut().zip(row) {
                    *p += v;
                }
            }
            pbar.iter_mut().for_each(|p| *p /= b as f64);
            entropy_term = xi * neg_entropy(&pbar);
            let log_pbar: Vec<f64> = pbar.iter().map(|&p| if p > 0.0 { p.ln() } else { 0.0 }).collect();
            for (bi, row) in pi.chunks(m).enumerate() {
                let avg: f64 = row.iter().zip(&log_pbar).map(|(p, l)| p * l).sum();
                let d = &mut d_eta[bi * (k + m)..(bi + 1) * (k + m)];
                for c in 0..m {
                    d[k + c] -= xi * row[c] * (log_pbar[c] - avg);
                }
            }
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        for (bi, &i) in batch.iter().enumerate() {
            let d = &d_eta[bi * (k + m)..(bi + 1) * (k + m)];
            for (j, &dj) in d.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let p = &layout.predictors[j];
                let z = self.rows.designs[self.rows.design_index[j]].row(i);
                for (g, zc) in grad[p.offset..p.offset + p.width].iter_mut().zip(z) {
                    *g += dj * zc;
                }
            }
        }

        let scale = b as f64 / self.fit_rows as f64;
        let mut penalty = 0.0;
        for (range, pen, lambda) in self.design.penalties() {
            let g = DVector::from_column_slice(&psi.0[range.clone()]);
            let pg = pen * &g;
            penalty += lambda * g.dot(&pg);
            for (gr, v) in grad[range].iter_mut().zip(pg.iter()) {
                *gr += 2.0 * scale * lambda * v;
            }
        }
        Ok(nll + scale * penalty - b as f64 * entropy_term)
    }

    /// Parameters and weights on new covariates, using the training bases.
    pub fn predict(&self, psi: &ParamVector, table: &DataTable) -> Result<Prediction> {
        self.design.check_psi(psi)?;
        let rows = self.design.evaluate(table)?;
        Ok(self.predict_rows(psi, &rows))
    }

    /// Parameters and weights on the training rows.
    pub fn predict_training(&self, psi: &ParamVector) -> Result<Prediction> {
        self.design.check_psi(psi)?;
        Ok(self.predict_rows(psi, &self.rows))
    }

    fn predict_rows(&self, psi: &ParamVector, rows: &DesignRows) -> Prediction {
        let layout = &self.design.layout;
        let k = self.transforms.len();
        let m = self.num_components();
        let n = rows.nrows;
        let mut theta: Vec<Vec<Vec<f64>>> = self
            .families
            .iter()
            .map(|f| vec![Vec::with_capacity(n); f.param_count()])
            .collect();
        let mut pi = Vec::with_capacity(n * m);
        let mut eta = vec![0.0; m];
        for i in 0..n {
            for (c, f) in self.families.iter().enumerate() {
                for p in 0..f.param_count() {
                    let j = self.param_offsets[c] + p;
                    theta[c][p].push(self.transforms[j].apply(rows.eta(layout, &psi.0, j, i)));
                }
            }
            for (c, e) in eta.iter_mut().enumerate() {
                *e = rows.eta(layout, &psi.0, k + c, i);
            }
            pi.extend(mixture_weights(&eta));
        }
        Prediction {
            theta,
            pi,
            extrapolated: rows.extrapolated.clone(),
        }
    }

    /// Log predictive density of `y` at each row of `table`, with
    /// extrapolation flags.
    pub fn predict_log_density(
        &self,
        psi: &ParamVector,
        table: &DataTable,
        y: &[f64],
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        self.design.check_psi(psi)?;
        if y.len() != table.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, covariates have {}",
                y.len(),
                table.nrows()
            )));
        }
        check_response(&self.families, y)?;
        let rows = self.design.evaluate(table)?;
        let mut s = self.scratch();
        let out = (0..y.len())
            .map(|i| self.eval_row(&rows, &psi.0, i, y[i], &mut s))
            .collect();
        Ok((out, rows.extrapolated))
    }

    /// Per-row log-likelihood on the training rows.
    pub fn row_log_likelihood(&self, psi: &ParamVector) -> Result<Vec<f64>> {
        self.design.check_psi(psi)?;
        let mut s = self.scratch();
        Ok((0..self.nrows())
            .map(|i| self.eval_row(&self.rows, &psi.0, i, self.y[i], &mut s))
            .collect())
    }
}

fn check_response(families: &[Family], y: &[f64]) -> Result<()> {
    for &v in y {
        if !families.iter().any(|f| f.supports(v)) {
            return Err(Error::InvalidResponse {
                family: families[0].name(),
                y: v,
            });
        }
    }
    Ok(())
}
