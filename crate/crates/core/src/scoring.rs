//! Weighted, penalized Fisher scoring for the parameters of one component.
//!
//! Maximizes `sum_i w_i log f(y_i | theta_i) - sum_l lambda_l g_l' P_l g_l`
//! one distribution parameter at a time. Every Newton-type step uses the
//! expected information and is halved until the objective does not decrease,
//! so each call is an ascent step for the weighted likelihood.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::predictors::ParamVector;

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringStats {
    pub cycles: usize,
    pub converged: bool,
    pub objective: f64,
}

/// Weighted penalized log-likelihood of component `c`.
pub fn component_objective(model: &MixtureModel, c: usize, weights: &[f64], psi: &[f64]) -> f64 {
    let family = model.families()[c];
    let off = model.param_offset(c);
    let np = family.param_count();
    let rows = model.training_rows();
    let layout = model.layout();
    let transforms = family.transforms();
    let y = model.y();
    let mut theta = [0.0; 2];
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for p in 0..np {
            theta[p] = transforms[p].apply(rows.eta(layout, psi, off + p, i));
        }
        total += w * family.log_density_unchecked(y[i], &theta[..np]);
    }
    total - component_penalty(model, c, psi)
}

fn component_penalty(model: &MixtureModel, c: usize, psi: &[f64]) -> f64 {
    let off = model.param_offset(c);
    let np = model.families()[c].param_count();
    let layout = model.layout();
    let mut total = 0.0;
    for p in 0..np {
        let j = off + p;
        let base = layout.predictors[j].offset;
        for b in &model.design().design_of(j).blocks {
            if let (Some(pen), true) = (&b.penalty, b.lambda > 0.0) {
                let g = DVector::from_column_slice(&psi[base + b.columns.start..base + b.columns.end]);
                total += b.lambda * g.dot(&(pen * &g));
            }
        }
    }
    total
}

/// Runs up to `max_cycles` scoring sweeps over the parameters of component
/// `c`, updating its coefficient slices of `psi` in place. Stops once no
/// coefficient moves by more than `tol`.
pub fn score_component(
    model: &MixtureModel,
    c: usize,
    weights: &[f64],
    psi: &mut ParamVector,
    max_cycles: usize,
    tol: f64,
) -> Result<ScoringStats> {
    let family = model.families()[c];
    let off = model.param_offset(c);
    let np = family.param_count();
    let rows = model.training_rows();
    let layout = model.layout().clone();
    let transforms = family.transforms();
    let y = model.y();

    let mut objective = component_objective(model, c, weights, &psi.0);
    if !objective.is_finite() {
        return Err(Error::Numerical(format!("component {} likelihood is not finite", c + 1)));
    }
    let mut theta = [0.0; 2];
    let mut eta = [0.0; 2];
    let mut score = [0.0; 2];
    let mut info = [0.0; 2];
    let mut cycles = 0;
    let mut converged = false;

    while cycles < max_cycles {
        cycles += 1;
        let mut largest_move: f64 = 0.0;
        for p in 0..np {
            let j = off + p;
            let pred = &layout.predictors[j];
            let width = pred.width;
            let z = &rows.designs[rows.design_index[j]];
            let mut grad = DVector::<f64>::zeros(width);
            let mut hess = DMatrix::<f64>::zeros(width, width);
            for (i, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for q in 0..np {
                    eta[q] = rows.eta(&layout, &psi.0, off + q, i);
                    theta[q] = transforms[q].apply(eta[q]);
                }
                family.dlogf_dtheta_into(y[i], &theta[..np], &mut score[..np]);
                family.fisher_info_into(&theta[..np], &mut info[..np]);
                let d = transforms[p].deriv(eta[p]);
                let gi = w * score[p] * d;
                let hi = w * info[p] * d * d;
                let zi = z.row(i);
                for a in 0..width {
                    grad[a] += gi * zi[a];
                    let ha = hi * zi[a];
                    for b in 0..=a {
                        hess[(a, b)] += ha * zi[b];
                    }
                }
            }
            for a in 0..width {
                for b in 0..a {
                    hess[(b, a)] = hess[(a, b)];
                }
            }
            let base = pred.offset;
            for b in &model.design().design_of(j).blocks {
                if let (Some(pen), true) = (&b.penalty, b.lambda > 0.0) {
                    let r = b.columns.clone();
                    let g = DVector::from_column_slice(&psi.0[base + r.start..base + r.end]);
                    let pg = pen * &g;
                    for (a, ia) in r.clone().enumerate() {
                        grad[ia] -= 2.0 * b.lambda * pg[a];
                        for (bb, ib) in r.clone().enumerate() {
                            hess[(ia, ib)] += 2.0 * b.lambda * pen[(a, bb)];
                        }
                    }
                }
            }
            let Some(chol) = hess.clone().cholesky() else {
                return Err(Error::Numerical(format!(
                    "weighted design of component {} is singular",
                    c + 1
                )));
            };
            let step = chol.solve(&grad);
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite scoring step in component {}", c + 1)));
            }
            let current: Vec<f64> = psi.0[pred.range()].to_vec();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                for (k, v) in psi.0[pred.range()].iter_mut().enumerate() {
                    *v = current[k] + t * step[k];
                }
                let trial = component_objective(model, c, weights, &psi.0);
                if trial.is_finite() && trial >= objective {
                    objective = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                largest_move = largest_move.max(t * step.amax());
            } else {
                psi.0[pred.range()].copy_from_slice(&current);
            }
        }
        if largest_move <= tol {
            converged = true;
            break;
        }
    }
    Ok(ScoringStats {
        cycles,
        converged,
        objective,
    })
}
