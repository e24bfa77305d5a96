//! Clustering and estimation metrics that account for label switching.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::predictors::ParamVector;

/// Maps estimated labels to true labels. Both sides are padded to the larger
/// label count; targets `>= num_true` are dummy labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    pub mapping: Vec<usize>,
    pub num_true: usize,
    pub num_est: usize,
}

impl LabelAssignment {
    pub fn identity(m: usize) -> Self {
        LabelAssignment {
            mapping: (0..m).collect(),
            num_true: m,
            num_est: m,
        }
    }

    /// True label matched by estimated label `k`, if any.
    pub fn target(&self, k: usize) -> Option<usize> {
        self.mapping.get(k).copied().filter(|&t| t < self.num_true)
    }

    /// Estimated label matched to true label `t`, if any.
    pub fn source(&self, t: usize) -> Option<usize> {
        (0..self.num_est).find(|&k| self.mapping[k] == t)
    }
}

fn label_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn check_pair(true_labels: &[usize], est_labels: &[usize]) -> Result<()> {
    if true_labels.is_empty() {
        return Err(Error::EmptyInput("label vectors"));
    }
    if true_labels.len() != est_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels vs {} estimated",
            true_labels.len(),
            est_labels.len()
        )));
    }
    Ok(())
}

/// `counts[k][t]`: rows with estimated label `k` and true label `t`, padded square.
pub fn confusion(true_labels: &[usize], est_labels: &[usize], size: usize) -> Vec<Vec<i64>> {
    let mut c = vec![vec![0i64; size]; size];
    for (&t, &e) in true_labels.iter().zip(est_labels) {
        c[e][t] += 1;
    }
    c
}

fn max_assignment_value(weights: &[Vec<i64>]) -> i64 {
    if weights.is_empty() {
        return 0;
    }
    let m = Matrix::from_rows(weights.iter().cloned()).expect("square weights");
    kuhn_munkres(&m).0
}

/// Permutation maximizing the total weight, lexicographically smallest among
/// the optimal ones.
pub fn max_weight_permutation(weights: &[Vec<i64>]) -> Vec<usize> {
    let size = weights.len();
    let best = max_assignment_value(weights);
    let mut fixed = Vec::with_capacity(size);
    let mut used = vec![false; size];
    let mut gained = 0;
    for row in 0..size {
        for col in 0..size {
            if used[col] {
                continue;
            }
            used[col] = true;
            let rest: Vec<Vec<i64>> = (row + 1..size)
                .map(|r| (0..size).filter(|&c| !used[c]).map(|c| weights[r][c]).collect())
                .collect();
            if gained + weights[row][col] + max_assignment_value(&rest) == best {
                gained += weights[row][col];
                fixed.push(col);
                break;
            }
            used[col] = false;
        }
    }
    fixed
}

/// Accuracy-optimal matching of estimated to true labels (labels are 0-based).
pub fn optimal_assignment(true_labels: &[usize], est_labels: &[usize]) -> Result<LabelAssignment> {
    check_pair(true_labels, est_labels)?;
    let (num_true, num_est) = (label_count(true_labels), label_count(est_labels));
    Ok(assignment_with_sizes(true_labels, est_labels, num_true, num_est))
}

/// As [`optimal_assignment`], with label counts given explicitly so that
/// unused components still receive a mapping.
pub fn assignment_with_sizes(
    true_labels: &[usize],
    est_labels: &[usize],
    num_true: usize,
    num_est: usize,
) -> LabelAssignment {
    let size = num_true.max(num_est);
    let c = confusion(true_labels, est_labels, size);
    LabelAssignment {
        mapping: max_weight_permutation(&c),
        num_true,
        num_est,
    }
}

/// Share of rows whose estimated label maps to their true label.
pub fn accuracy(true_labels: &[usize], est_labels: &[usize]) -> Result<f64> {
    let a = optimal_assignment(true_labels, est_labels)?;
    Ok(accuracy_under(true_labels, est_labels, &a))
}

pub fn accuracy_under(true_labels: &[usize], est_labels: &[usize], a: &LabelAssignment) -> f64 {
    let hits = true_labels
        .iter()
        .zip(est_labels)
        .filter(|(&t, &e)| a.target(e) == Some(t))
        .count();
    hits as f64 / true_labels.len() as f64
}

fn choose2(k: i64) -> f64 {
    (k * (k - 1)) as f64 / 2.0
}

/// Hubert-Arabie adjusted Rand index.
pub fn adjusted_rand_index(true_labels: &[usize], est_labels: &[usize]) -> Result<f64> {
    check_pair(true_labels, est_labels)?;
    if true_labels.len() < 2 {
        return Err(Error::EmptyInput("adjusted Rand index needs at least two rows"));
    }
    let size = label_count(true_labels).max(label_count(est_labels));
    let c = confusion(true_labels, est_labels, size);
    let index: f64 = c.iter().flatten().map(|&v| choose2(v)).sum();
    let a: f64 = (0..size).map(|t| choose2(c.iter().map(|row| row[t]).sum())).sum();
    let b: f64 = c.iter().map(|row| choose2(row.iter().sum())).sum();
    let expected = a * b / choose2(true_labels.len() as i64);
    let max = 0.5 * (a + b);
    if max == expected {
        // only possible when both partitions are identical
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Per-component coefficient vectors and marginal weights, the parts of a
/// fit that stay comparable across label permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparableParams {
    pub component_coefs: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
}

impl ComparableParams {
    /// Component coefficients from `psi` and the average mixture weights over
    /// the training rows.
    pub fn from_fit(model: &MixtureModel, psi: &ParamVector) -> Result<Self> {
        let layout = model.layout();
        let mut component_coefs = Vec::with_capacity(model.num_components());
        let mut j = 0;
        for f in model.families() {
            let mut coefs = Vec::new();
            for _ in 0..f.param_count() {
                coefs.extend_from_slice(psi.predictor(layout, j));
                j += 1;
            }
            component_coefs.push(coefs);
        }
        let pi = model.mean_weights(psi, &model.all_rows())?;
        Ok(ComparableParams { component_coefs, pi })
    }

    pub fn num_components(&self) -> usize {
        self.component_coefs.len()
    }
}

/// Root mean squared difference over matched component coefficients and
/// weights. Estimated components without a match are skipped; true
/// components without a match count against an estimate of zero weight.
pub fn coefficient_rmse(
    truth: &ComparableParams,
    est: &ComparableParams,
    assignment: &LabelAssignment,
) -> Result<f64> {
    let mut sq = 0.0;
    let mut count = 0usize;
    for t in 0..truth.num_components() {
        let tc = &truth.component_coefs[t];
        match assignment.source(t).filter(|&k| k < est.num_components()) {
            Some(k) => {
                let ec = &est.component_coefs[k];
                if ec.len() != tc.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "component {} has {} coefficients, estimate {} has {}",
                        t + 1,
                        tc.len(),
                        k + 1,
                        ec.len()
                    )));
                }
                sq += tc.iter().zip(ec).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                sq += (truth.pi[t] - est.pi[k]).powi(2);
            }
            None => {
                sq += tc.iter().map(|a| a * a).sum::<f64>();
                sq += truth.pi[t].powi(2);
            }
        }
        count += tc.len() + 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput("no coefficients to compare"));
    }
    Ok((sq / count as f64).sqrt())
}

/// Mean log predictive density over a test set.
pub fn predictive_log_score(model: &MixtureModel, psi: &ParamVector, table: &DataTable, y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    let (ld, _) = model.predict_log_density(psi, table, y)?;
    Ok(ld.iter().sum::<f64>() / ld.len() as f64)
}
