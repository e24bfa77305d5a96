//! Penalized B-spline smooths.
//!
//! Cubic B-splines on equally spaced clamped knots, difference penalties,
//! the sum-to-zero reparameterization, two-margin tensor products and the
//! calibration of smoothing parameters from a degrees-of-freedom target.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search interval for `log10(lambda)`.
pub const LOG10_LAMBDA_RANGE: (f64, f64) = (-12.0, 12.0);
pub const MAX_BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "default_num_basis")]
    pub num_basis: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_penalty_order")]
    pub penalty_order: usize,
    /// Target degrees of freedom; falls back to the model default when absent.
    #[serde(default)]
    pub df: Option<f64>,
    /// Fixed smoothing parameter, overriding any df target.
    #[serde(default)]
    pub lambda: Option<f64>,
}

fn default_num_basis() -> usize {
    10
}
fn default_degree() -> usize {
    3
}
fn default_penalty_order() -> usize {
    2
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            num_basis: default_num_basis(),
            degree: default_degree(),
            penalty_order: default_penalty_order(),
            df: None,
            lambda: None,
        }
    }
}

impl BasisConfig {
    pub fn with_num_basis(mut self, num_basis: usize) -> Self {
        self.num_basis = num_basis;
        self
    }

    pub fn with_df(mut self, df: f64) -> Self {
        self.df = Some(df);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_basis <= self.degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "num_basis ({}) must exceed degree + 1 ({})",
                self.num_basis,
                self.degree + 1
            )));
        }
        if self.penalty_order >= self.num_basis {
            return Err(Error::InvalidBasis(format!(
                "penalty_order ({}) must be below num_basis ({})",
                self.penalty_order, self.num_basis
            )));
        }
        if let Some(df) = self.df {
            if !(df > 0.0) {
                return Err(Error::InvalidBasis(format!("df must be positive, got {df}")));
            }
        }
        if let Some(lambda) = self.lambda {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidBasis(format!(
                    "lambda must be finite and non-negative, got {lambda}"
                )));
            }
        }
        Ok(())
    }
}

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub degree: usize,
    pub num_basis: usize,
    pub knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(lower: f64, upper: f64, num_basis: usize, degree: usize) -> Result<Self> {
        if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidBasis(format!(
                "degenerate range [{lower}, {upper}]"
            )));
        }
        if num_basis <= degree + 1 {
            return Err(Error::InvalidBasis(format!(
                "num_basis ({num_basis}) must exceed degree + 1"
            )));
        }
        let intervals = num_basis - degree;
        let mut knots = Vec::with_capacity(num_basis + degree + 1);
        knots.extend(std::iter::repeat_n(lower, degree + 1));
        for k in 1..intervals {
            knots.push(lower + (upper - lower) * k as f64 / intervals as f64);
        }
        knots.extend(std::iter::repeat_n(upper, degree + 1));
        Ok(BSplineBasis {
            degree,
            num_basis,
            knots,
        })
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn find_span(&self, x: f64) -> usize {
        let last = self.num_basis - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        // largest s in [degree, last] with knots[s] <= x
        let mut lo = self.degree;
        let mut hi = last + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Evaluates all basis functions at `x`, writing `num_basis` values into
    /// `out`. Values outside the knot range are evaluated at the nearest
    /// boundary; the return value reports whether clamping happened.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> bool {
        let clamped = x.clamp(self.lower(), self.upper());
        let extrapolated = clamped != x;
        out.iter_mut().for_each(|v| *v = 0.0);
        let p = self.degree;
        let span = self.find_span(clamped);
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = clamped - u[span + 1 - j];
            right[j] = u[span + j] - clamped;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (k, v) in n.into_iter().enumerate() {
            out[span - p + k] = v;
        }
        extrapolated
    }

    pub fn design(&self, x: &[f64]) -> (DMatrix<f64>, usize) {
        let mut m = DMatrix::zeros(x.len(), self.num_basis);
        let mut row = vec![0.0; self.num_basis];
        let mut extrapolated = 0;
        for (i, &xi) in x.iter().enumerate() {
            if self.eval_into(xi, &mut row) {
                extrapolated += 1;
            }
            for (c, v) in row.iter().enumerate() {
                m[(i, c)] = *v;
            }
        }
        (m, extrapolated)
    }
}

/// Raw `n x O` B-spline design with knots spread over the range of `x`.
pub fn bspline_design(x: &[f64], cfg: &BasisConfig) -> Result<(DMatrix<f64>, BSplineBasis)> {
    cfg.validate()?;
    if x.len() < cfg.num_basis {
        return Err(Error::InvalidBasis(format!(
            "{} observations are fewer than {} basis functions",
            x.len(),
            cfg.num_basis
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBasis("non-finite covariate value".into()));
    }
    let lower = x.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let basis = BSplineBasis::new(lower, upper, cfg.num_basis, cfg.degree)?;
    let (design, _) = basis.design(x);
    Ok((design, basis))
}

/// `D^T D` for the `order`-th difference operator on `num_basis` coefficients.
pub fn difference_penalty(num_basis: usize, order: usize) -> Result<DMatrix<f64>> {
    if order >= num_basis {
        return Err(Error::InvalidBasis(format!(
            "difference order {order} must be below the basis dimension {num_basis}"
        )));
    }
    let mut d = DMatrix::<f64>::identity(num_basis, num_basis);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        let mut next = DMatrix::zeros(rows, num_basis);
        for r in 0..rows {
            for c in 0..num_basis {
                next[(r, c)] = d[(r + 1, c)] - d[(r, c)];
            }
        }
        d = next;
    }
    Ok(d.transpose() * d)
}

/// Unconstrained smooth: raw design and penalty, before centering.
#[derive(Debug, Clone)]
pub struct RawSmooth {
    pub design: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    pub bases: Vec<BSplineBasis>,
}

impl RawSmooth {
    pub fn univariate(x: &[f64], cfg: &BasisConfig) -> Result<Self> {
        let (design, basis) = bspline_design(x, cfg)?;
        let penalty = difference_penalty(cfg.num_basis, cfg.penalty_order)?;
        Ok(RawSmooth {
            design,
            penalty,
            bases: vec![basis],
        })
    }
}

/// Centered smooth term: design, penalty and smoothing parameter.
#[derive(Debug, Clone)]
pub struct SmoothTerm {
    pub design: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    pub lambda: f64,
    pub knots: Vec<Vec<f64>>,
    /// `O x (O - 1)` map from constrained to raw coefficients.
    pub constraint_transform: DMatrix<f64>,
}

/// Reparameterizes a raw smooth so that its fitted values sum to zero over the
/// training rows. The constrained coefficients live in an orthonormal basis of
/// the nullspace of the column-sum constraint.
pub fn apply_sum_to_zero(raw: &RawSmooth, name: &str) -> Result<SmoothTerm> {
    let o = raw.design.ncols();
    if o < 2 {
        return Err(Error::RankDeficient { term: name.into() });
    }
    let sums: DVector<f64> = raw.design.row_sum().transpose();
    let transform = householder_complement(&sums).ok_or_else(|| Error::RankDeficient {
        term: name.into(),
    })?;
    let design = &raw.design * &transform;
    let penalty = transform.transpose() * &raw.penalty * &transform;
    let penalty = symmetrize(penalty);
    check_full_rank(&design, name)?;
    Ok(SmoothTerm {
        design,
        penalty,
        lambda: 0.0,
        knots: raw.bases.iter().map(|b| b.knots.clone()).collect(),
        constraint_transform: transform,
    })
}

/// Orthonormal basis (as columns) of the complement of `v`.
fn householder_complement(v: &DVector<f64>) -> Option<DMatrix<f64>> {
    let o = v.len();
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let mut u = v.clone();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += sign * norm;
    let uu = u.dot(&u);
    // H = I - 2 u u^T / u^T u; its first column is parallel to v
    let mut h = DMatrix::<f64>::identity(o, o);
    h -= (&u * u.transpose()) * (2.0 / uu);
    Some(h.columns(1, o - 1).into_owned())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn check_full_rank(design: &DMatrix<f64>, name: &str) -> Result<()> {
    let gram = design.transpose() * design;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::RankDeficient { term: name.into() });
    }
    Ok(())
}

/// Row-wise Kronecker product of two marginal smooths with the isotropic
/// penalty `P_a (x) I + I (x) P_b`. Column `j * O_b + k` pairs basis `j` of
/// the first margin with basis `k` of the second.
pub fn tensor_product(a: &RawSmooth, b: &RawSmooth) -> Result<RawSmooth> {
    let n = a.design.nrows();
    if b.design.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "tensor margins have {} and {} rows",
            n,
            b.design.nrows()
        )));
    }
    let (oa, ob) = (a.design.ncols(), b.design.ncols());
    let design = row_kronecker(&a.design, &b.design);
    let ia = DMatrix::<f64>::identity(oa, oa);
    let ib = DMatrix::<f64>::identity(ob, ob);
    let penalty = a.penalty.kronecker(&ib) + ia.kronecker(&b.penalty);
    let mut bases = a.bases.clone();
    bases.extend(b.bases.iter().cloned());
    Ok(RawSmooth {
        design,
        penalty,
        bases,
    })
}

pub(crate) fn row_kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let (oa, ob) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(n, oa * ob);
    for i in 0..n {
        for j in 0..oa {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..ob {
                out[(i, j * ob + k)] = aij * b[(i, k)];
            }
        }
    }
    out
}

/// Spectrum of the penalty after whitening by `(Z^T Z)^{-1/2}`; the effective
/// degrees of freedom are `sum_i 1 / (1 + lambda d_i)`.
#[derive(Debug, Clone)]
pub struct DfSpectrum {
    pub eigenvalues: Vec<f64>,
}

impl DfSpectrum {
    pub fn new(design: &DMatrix<f64>, penalty: &DMatrix<f64>) -> Result<Self> {
        let gram = design.transpose() * design;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("Z^T Z is not positive definite".into()))?;
        let l = chol.l();
        let lp = l
            .solve_lower_triangular(penalty)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let whitened = l
            .solve_lower_triangular(&lp.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let eig = SymmetricEigen::new(symmetrize(whitened));
        let max = eig.eigenvalues.max().max(0.0);
        let eigenvalues = eig
            .eigenvalues
            .iter()
            .map(|&d| if d <= 1e-10 * max { 0.0 } else { d })
            .collect();
        Ok(DfSpectrum { eigenvalues })
    }

    pub fn df(&self, lambda: f64) -> f64 {
        self.eigenvalues.iter().map(|d| 1.0 / (1.0 + lambda * d)).sum()
    }

    pub fn nullspace_dim(&self) -> usize {
        self.eigenvalues.iter().filter(|&&d| d == 0.0).count()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Outcome of [`lambda_from_df`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfCalibration {
    pub lambda: f64,
    pub df: f64,
    pub iterations: usize,
}

/// Finds the smoothing parameter whose hat-matrix trace equals `df_target`
/// by bisection on `log10(lambda)`.
pub fn lambda_from_df(term: &SmoothTerm, df_target: f64) -> Result<DfCalibration> {
    let spectrum = DfSpectrum::new(&term.design, &term.penalty)?;
    lambda_from_spectrum(&spectrum, df_target)
}

pub fn lambda_from_spectrum(spectrum: &DfSpectrum, df_target: f64) -> Result<DfCalibration> {
    let (mut lo, mut hi) = LOG10_LAMBDA_RANGE;
    let df_max = spectrum.df(10f64.powf(lo));
    let df_min = spectrum.df(10f64.powf(hi));
    if !(df_target >= df_min && df_target <= df_max) {
        return Err(Error::DfOutOfRange {
            target: df_target,
            min: df_min,
            max: df_max,
        });
    }
    let mut iterations = 0;
    let mut mid = 0.5 * (lo + hi);
    let mut df = spectrum.df(10f64.powf(mid));
    while iterations < MAX_BISECTION_STEPS {
        iterations += 1;
        mid = 0.5 * (lo + hi);
        df = spectrum.df(10f64.powf(mid));
        if (df - df_target).abs() < 1e-10 {
            break;
        }
        if df > df_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DfCalibration {
        lambda: 10f64.powf(mid),
        df,
        iterations,
    })
}
