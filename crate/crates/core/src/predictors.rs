//! Additive structured predictors.
//!
//! Every distribution parameter of every component gets its own predictor
//! `eta = intercept + linear terms + smooth terms`; the `M` gating logits share
//! one design with separate coefficient slices. A [`DesignSet`] holds the
//! evaluated designs and the [`ParamLayout`] that maps predictors and terms to
//! slices of the flat coefficient vector.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{
    apply_sum_to_zero, row_kronecker, tensor_product, BSplineBasis, BasisConfig, DfSpectrum,
    RawSmooth,
};
use crate::data::{Column, DataTable};
use crate::error::{Error, Result};
use crate::families::Family;

/// Smooth effect of one covariate, or a tensor product of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub vars: Vec<String>,
    pub basis: BasisConfig,
}

impl SmoothSpec {
    pub fn new(var: impl Into<String>, basis: BasisConfig) -> Self {
        SmoothSpec {
            vars: vec![var.into()],
            basis,
        }
    }

    pub fn tensor(a: impl Into<String>, b: impl Into<String>, basis: BasisConfig) -> Self {
        SmoothSpec {
            vars: vec![a.into(), b.into()],
            basis,
        }
    }

    pub fn label(&self) -> String {
        match self.vars.as_slice() {
            [v] => format!("s({v})"),
            vars => format!("te({})", vars.join(",")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub intercept: bool,
    pub linear: Vec<String>,
    pub smooth: Vec<SmoothSpec>,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::intercept_only()
    }
}

impl PredictorSpec {
    pub fn intercept_only() -> Self {
        PredictorSpec {
            intercept: true,
            linear: Vec::new(),
            smooth: Vec::new(),
        }
    }

    pub fn linear<S: AsRef<str>>(vars: &[S]) -> Self {
        PredictorSpec {
            intercept: true,
            linear: vars.iter().map(|v| v.as_ref().to_string()).collect(),
            smooth: Vec::new(),
        }
    }

    pub fn with_smooth(mut self, smooth: SmoothSpec) -> Self {
        self.smooth.push(smooth);
        self
    }

    pub fn is_intercept_only(&self) -> bool {
        self.intercept && self.linear.is_empty() && self.smooth.is_empty()
    }

    fn validate(&self, owner: &str) -> Result<()> {
        if !self.intercept && self.linear.is_empty() && self.smooth.is_empty() {
            return Err(Error::InvalidSpec(format!("predictor `{owner}` has no terms")));
        }
        let smooth_vars: BTreeSet<&str> = self
            .smooth
            .iter()
            .flat_map(|s| s.vars.iter().map(String::as_str))
            .collect();
        if let Some(v) = self.linear.iter().find(|v| smooth_vars.contains(v.as_str())) {
            return Err(Error::OverlappingTerms(v.clone()));
        }
        for s in &self.smooth {
            if s.vars.is_empty() || s.vars.len() > 2 {
                return Err(Error::InvalidSpec(format!(
                    "smooth terms take one or two variables, `{owner}` has {}",
                    s.vars.len()
                )));
            }
            s.basis.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub family: Family,
    /// One predictor per distribution parameter, in the family's order.
    pub params: Vec<PredictorSpec>,
}

impl ComponentSpec {
    pub fn new(family: Family, params: Vec<PredictorSpec>) -> Self {
        ComponentSpec { family, params }
    }

    /// Every parameter modelled by the same predictor structure.
    pub fn uniform(family: Family, predictor: PredictorSpec) -> Self {
        ComponentSpec {
            family,
            params: vec![predictor; family.param_count()],
        }
    }
}

/// Declarative description of a mixture of experts distributional regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub components: Vec<ComponentSpec>,
    pub gating: PredictorSpec,
    /// Entropy penalty weight.
    #[serde(default)]
    pub xi: f64,
    /// df target for smooths without their own `df` or `lambda`.
    #[serde(default)]
    pub default_df: Option<f64>,
}

impl ModelSpec {
    pub fn new(components: Vec<ComponentSpec>, gating: PredictorSpec) -> Self {
        ModelSpec {
            components,
            gating,
            xi: 0.0,
            default_df: None,
        }
    }

    /// `m` identical components sharing one predictor structure and constant
    /// mixture weights.
    pub fn homogeneous(family: Family, m: usize, predictor: PredictorSpec) -> Self {
        ModelSpec::new(
            vec![ComponentSpec::uniform(family, predictor); m],
            PredictorSpec::intercept_only(),
        )
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_default_df(mut self, df: f64) -> Self {
        self.default_df = Some(df);
        self
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn families(&self) -> Vec<Family> {
        self.components.iter().map(|c| c.family).collect()
    }

    /// `K`, the total number of distribution parameters.
    pub fn num_dist_params(&self) -> usize {
        self.components.iter().map(|c| c.family.param_count()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidSpec("at least one component is required".into()));
        }
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            return Err(Error::InvalidSpec(format!("xi must be non-negative, got {}", self.xi)));
        }
        for (m, c) in self.components.iter().enumerate() {
            if c.params.len() != c.family.param_count() {
                return Err(Error::InvalidSpec(format!(
                    "component {} ({}) needs {} parameter predictors, got {}",
                    m + 1,
                    c.family,
                    c.family.param_count(),
                    c.params.len()
                )));
            }
            for (k, p) in c.params.iter().enumerate() {
                p.validate(&predictor_name(m, c.family.param_names()[k]))?;
            }
        }
        self.gating.validate("gate")?;
        Ok(())
    }

    pub fn has_smooths(&self) -> bool {
        self.gating.smooth.iter().next().is_some()
            || self
                .components
                .iter()
                .any(|c| c.params.iter().any(|p| !p.smooth.is_empty()))
    }
}

fn predictor_name(m: usize, param: &str) -> String {
    format!("m{}.{}", m + 1, param)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRows {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DenseRows {
    fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseRows {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    fn set_block(&mut self, cols: &Range<usize>, block: &DMatrix<f64>) {
        for i in 0..self.nrows {
            for (c, col) in cols.clone().enumerate() {
                self.data[i * self.ncols + col] = block[(i, c)];
            }
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }
}

/// How a block's columns are computed from covariates.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockBasis {
    Intercept,
    Linear { column: String },
    /// Treatment coding of a categorical column; `levels` excludes the reference.
    Dummies { column: String, levels: Vec<String> },
    Smooth {
        columns: Vec<String>,
        bases: Vec<BSplineBasis>,
        constraint: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    pub name: String,
    /// Columns inside the predictor design.
    pub columns: Range<usize>,
    pub basis: BlockBasis,
    pub penalty: Option<DMatrix<f64>>,
    pub lambda: f64,
    /// Effective degrees of freedom at `lambda` (smooths only).
    pub df: Option<f64>,
    /// The df target met or exceeded the basis dimension, so the term is unpenalized.
    pub df_saturated: bool,
}

impl DesignBlock {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        match &self.basis {
            BlockBasis::Intercept => vec!["(Intercept)".into()],
            BlockBasis::Linear { column } => vec![column.clone()],
            BlockBasis::Dummies { column, levels } => {
                levels.iter().map(|l| format!("{column}[{l}]")).collect()
            }
            BlockBasis::Smooth { .. } => (1..=self.width())
                .map(|k| format!("{}.{k}", self.name))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorDesign {
    pub blocks: Vec<DesignBlock>,
    pub rows: DenseRows,
}

impl PredictorDesign {
    pub fn width(&self) -> usize {
        self.rows.ncols
    }

    fn build(spec: &PredictorSpec, table: &DataTable, default_df: Option<f64>, owner: &str) -> Result<Self> {
        let n = table.nrows();
        let mut pending: Vec<(String, BlockBasis, DMatrix<f64>, Option<DMatrix<f64>>, f64, Option<f64>, bool)> =
            Vec::new();
        if spec.intercept {
            pending.push((
                "(Intercept)".into(),
                BlockBasis::Intercept,
                DMatrix::from_element(n, 1, 1.0),
                None,
                0.0,
                None,
                false,
            ));
        }
        for var in &spec.linear {
            match table.column(var)? {
                Column::Numeric(v) => {
                    check_finite(var, v)?;
                    pending.push((
                        var.clone(),
                        BlockBasis::Linear { column: var.clone() },
                        DMatrix::from_column_slice(n, 1, v),
                        None,
                        0.0,
                        None,
                        false,
                    ));
                }
                Column::Categorical(v) => {
                    let levels: Vec<String> =
                        v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                    if levels.len() < 2 {
                        return Err(Error::InvalidColumn {
                            column: var.clone(),
                            detail: "categorical column has a single level".into(),
                        });
                    }
                    let levels = levels[1..].to_vec();
                    let m = dummy_matrix(v, &levels);
                    pending.push((
                        var.clone(),
                        BlockBasis::Dummies {
                            column: var.clone(),
                            levels,
                        },
                        m,
                        None,
                        0.0,
                        None,
                        false,
                    ));
                }
            }
        }
        for s in &spec.smooth {
            let label = s.label();
            let mut margins = Vec::with_capacity(s.vars.len());
            for var in &s.vars {
                let x = table.numeric(var)?;
                check_finite(var, x)?;
                let (lo, hi) = x
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                if !(hi > lo) {
                    return Err(Error::DegenerateCovariate {
                        term: format!("{owner}:{label}"),
                        detail: format!("column `{var}` is constant"),
                    });
                }
                margins.push(RawSmooth::univariate(x, &s.basis).map_err(|e| match e {
                    Error::InvalidBasis(d) => Error::InvalidBasis(format!("{owner}:{label}: {d}")),
                    other => other,
                })?);
            }
            let raw = match margins.as_slice() {
                [one] => one.clone(),
                [a, b] => tensor_product(a, b)?,
                _ => unreachable!("validated"),
            };
            let term = apply_sum_to_zero(&raw, &format!("{owner}:{label}"))?;
            let spectrum = DfSpectrum::new(&term.design, &term.penalty)?;
            let (lambda, saturated) = match (s.basis.lambda, s.basis.df.or(default_df)) {
                (Some(lambda), _) => (lambda, false),
                (None, None) => (0.0, false),
                (None, Some(df)) if df >= spectrum.rank() as f64 => (0.0, true),
                (None, Some(df)) => {
                    let cal = crate::basis::lambda_from_spectrum(&spectrum, df).map_err(|e| match e {
                        Error::DfOutOfRange { target, min, max } => Error::InvalidSpec(format!(
                            "{owner}:{label}: df {target} outside attainable [{min}, {max}]"
                        )),
                        other => other,
                    })?;
                    (cal.lambda, false)
                }
            };
            pending.push((
                label,
                BlockBasis::Smooth {
                    columns: s.vars.clone(),
                    bases: raw.bases.clone(),
                    constraint: term.constraint_transform.clone(),
                },
                term.design,
                Some(term.penalty),
                lambda,
                Some(spectrum.df(lambda)),
                saturated,
            ));
        }

        let width: usize = pending.iter().map(|p| p.2.ncols()).sum();
        let mut rows = DenseRows::zeros(n, width);
        let mut blocks = Vec::with_capacity(pending.len());
        let mut offset = 0;
        for (name, basis, m, penalty, lambda, df, df_saturated) in pending {
            let columns = offset..offset + m.ncols();
            rows.set_block(&columns, &m);
            offset = columns.end;
            blocks.push(DesignBlock {
                name,
                columns,
                basis,
                penalty,
                lambda,
                df,
                df_saturated,
            });
        }
        Ok(PredictorDesign { blocks, rows })
    }

    /// Evaluates this design on new covariates using the training knots and
    /// constraints. Returns the rows and, per row, whether any smooth had to
    /// be evaluated outside its knot range.
    pub fn evaluate(&self, table: &DataTable) -> Result<(DenseRows, Vec<bool>)> {
        let n = table.nrows();
        let mut rows = DenseRows::zeros(n, self.width());
        let mut extrapolated = vec![false; n];
        for block in &self.blocks {
            let m = match &block.basis {
                BlockBasis::Intercept => DMatrix::from_element(n, 1, 1.0),
                BlockBasis::Linear { column } => {
                    let v = table.numeric(column)?;
                    check_finite(column, v)?;
                    DMatrix::from_column_slice(n, 1, v)
                }
                BlockBasis::Dummies { column, levels } => match table.column(column)? {
                    Column::Categorical(v) => dummy_matrix(v, levels),
                    Column::Numeric(_) => {
                        return Err(Error::InvalidColumn {
                            column: column.clone(),
                            detail: "expected a categorical column".into(),
                        })
                    }
                },
                BlockBasis::Smooth {
                    columns,
                    bases,
                    constraint,
                } => {
                    let mut raw: Option<DMatrix<f64>> = None;
                    for (col, basis) in columns.iter().zip(bases) {
                        let x = table.numeric(col)?;
                        check_finite(col, x)?;
                        for (i, &xi) in x.iter().enumerate() {
                            if xi < basis.lower() || xi > basis.upper() {
                                extrapolated[i] = true;
                            }
                        }
                        let (d, _) = basis.design(x);
                        raw = Some(match raw {
                            None => d,
                            Some(prev) => row_kronecker(&prev, &d),
                        });
                    }
                    raw.expect("smooth has at least one margin") * constraint
                }
            };
            rows.set_block(&block.columns, &m);
        }
        Ok((rows, extrapolated))
    }
}

fn dummy_matrix(values: &[String], levels: &[String]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(values.len(), levels.len());
    for (i, v) in values.iter().enumerate() {
        if let Some(k) = levels.iter().position(|l| l == v) {
            m[(i, k)] = 1.0;
        }
    }
    m
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidColumn {
            column: name.to_string(),
            detail: format!("non-finite value in row {}", i + 1),
        });
    }
    Ok(())
}

/// Term-level slices of the flat coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorLayout {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub terms: Vec<(String, Range<usize>)>,
}

impl PredictorLayout {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.width
    }
}

/// Maps `(predictor, term)` to coefficient slices. Predictors are ordered as
/// component parameters (component-major) followed by the `M` gating logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub predictors: Vec<PredictorLayout>,
    pub num_dist_params: usize,
    pub num_components: usize,
    len: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn gating_predictor(&self, m: usize) -> usize {
        self.num_dist_params + m
    }

    pub fn term_range(&self, predictor: usize, term: &str) -> Option<Range<usize>> {
        self.predictors[predictor]
            .terms
            .iter()
            .find(|(name, _)| name == term)
            .map(|(_, r)| r.clone())
    }
}

/// Flat coefficient vector `psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(layout: &ParamLayout) -> Self {
        ParamVector(vec![0.0; layout.len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn predictor<'a>(&'a self, layout: &ParamLayout, j: usize) -> &'a [f64] {
        &self.0[layout.predictors[j].range()]
    }

    /// Nested `[predictor][term][coefficient]` view.
    pub fn unpack(&self, layout: &ParamLayout) -> Vec<Vec<Vec<f64>>> {
        layout
            .predictors
            .iter()
            .map(|p| p.terms.iter().map(|(_, r)| self.0[r.clone()].to_vec()).collect())
            .collect()
    }

    pub fn pack(layout: &ParamLayout, nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut out = vec![0.0; layout.len()];
        if nested.len() != layout.predictors.len() {
            return Err(Error::DimensionMismatch("predictor count".into()));
        }
        for (p, terms) in layout.predictors.iter().zip(nested) {
            if terms.len() != p.terms.len() {
                return Err(Error::DimensionMismatch(format!("term count of `{}`", p.name)));
            }
            for ((_, r), vals) in p.terms.iter().zip(terms) {
                if vals.len() != r.len() {
                    return Err(Error::DimensionMismatch(format!("term width in `{}`", p.name)));
                }
                out[r.clone()].copy_from_slice(vals);
            }
        }
        Ok(ParamVector(out))
    }
}

/// Evaluated designs for all `K + M` predictors of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub nrows: usize,
    /// Distinct designs: one per distribution parameter, then the shared gating design.
    pub designs: Vec<PredictorDesign>,
    /// Predictor `j` uses `designs[design_index[j]]`.
    pub design_index: Vec<usize>,
    pub layout: ParamLayout,
}

/// Design matrices evaluated on some covariate table, in [`DesignSet`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRows {
    pub nrows: usize,
    pub designs: Vec<DenseRows>,
    pub design_index: Vec<usize>,
    pub extrapolated: Vec<bool>,
}

impl DesignSet {
    pub fn build(spec: &ModelSpec, table: &DataTable) -> Result<Self> {
        spec.validate()?;
        let n = table.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("covariate table has no rows"));
        }
        let mut designs = Vec::new();
        let mut names = Vec::new();
        for (m, c) in spec.components.iter().enumerate() {
            for (k, p) in c.params.iter().enumerate() {
                let name = predictor_name(m, c.family.param_names()[k]);
                designs.push(PredictorDesign::build(p, table, spec.default_df, &name)?);
                names.push(name);
            }
        }
        let k_total = designs.len();
        designs.push(PredictorDesign::build(&spec.gating, table, spec.default_df, "gate")?);
        let m_total = spec.num_components();
        let mut design_index: Vec<usize> = (0..k_total).collect();
        design_index.extend(std::iter::repeat_n(k_total, m_total));
        names.extend((0..m_total).map(|m| format!("gate.m{}", m + 1)));

        let mut predictors = Vec::with_capacity(k_total + m_total);
        let mut offset = 0;
        for (j, name) in names.into_iter().enumerate() {
            let d = &designs[design_index[j]];
            let terms = d
                .blocks
                .iter()
                .map(|b| (b.name.clone(), offset + b.columns.start..offset + b.columns.end))
                .collect();
            predictors.push(PredictorLayout {
                name,
                offset,
                width: d.width(),
                terms,
            });
            offset += d.width();
        }
        Ok(DesignSet {
            nrows: n,
            designs,
            design_index,
            layout: ParamLayout {
                predictors,
                num_dist_params: k_total,
                num_components: m_total,
                len: offset,
            },
        })
    }

    pub fn num_predictors(&self) -> usize {
        self.design_index.len()
    }

    pub fn design_of(&self, j: usize) -> &PredictorDesign {
        &self.designs[self.design_index[j]]
    }

    pub fn training_rows(&self) -> DesignRows {
        DesignRows {
            nrows: self.nrows,
            designs: self.designs.iter().map(|d| d.rows.clone()).collect(),
            design_index: self.design_index.clone(),
            extrapolated: vec![false; self.nrows],
        }
    }

    pub fn evaluate(&self, table: &DataTable) -> Result<DesignRows> {
        let n = table.nrows();
        let mut extrapolated = vec![false; n];
        let mut designs = Vec::with_capacity(self.designs.len());
        for d in &self.designs {
            let (rows, ext) = d.evaluate(table)?;
            for (flag, e) in extrapolated.iter_mut().zip(ext) {
                *flag |= e;
            }
            designs.push(rows);
        }
        Ok(DesignRows {
            nrows: n,
            designs,
            design_index: self.design_index.clone(),
            extrapolated,
        })
    }

    /// Coefficient names in `psi` order, `predictor:term`.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.layout.len());
        for (j, p) in self.layout.predictors.iter().enumerate() {
            for b in &self.design_of(j).blocks {
                out.extend(b.coefficient_names().into_iter().map(|c| format!("{}:{c}", p.name)));
            }
        }
        out
    }

    /// Penalized blocks as `(psi range, penalty, lambda)`.
    pub fn penalties(&self) -> Vec<(Range<usize>, &DMatrix<f64>, f64)> {
        let mut out = Vec::new();
        for (j, p) in self.layout.predictors.iter().enumerate() {
            for b in &self.design_of(j).blocks {
                if let Some(pen) = &b.penalty {
                    if b.lambda > 0.0 {
                        out.push((p.offset + b.columns.start..p.offset + b.columns.end, pen, b.lambda));
                    }
                }
            }
        }
        out
    }

    pub fn check_psi(&self, psi: &ParamVector) -> Result<()> {
        if psi.len() != self.layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "psi has length {}, layout expects {}",
                psi.len(),
                self.layout.len()
            )));
        }
        Ok(())
    }

    /// All predictors at all rows, `(K + M) x n`.
    pub fn eval_eta(&self, psi: &ParamVector) -> Result<Vec<Vec<f64>>> {
        self.check_psi(psi)?;
        Ok(self.training_rows().eval_eta(&self.layout, psi))
    }

    /// Chain rule through the linear predictors: the gradient block of
    /// predictor `j` is `Z_j^T dl_deta[j]`.
    pub fn eta_gradient_backprop(&self, dl_deta: &[Vec<f64>]) -> Result<Vec<f64>> {
        if dl_deta.len() != self.num_predictors() || dl_deta.iter().any(|r| r.len() != self.nrows) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} x {} predictor derivatives",
                self.num_predictors(),
                self.nrows
            )));
        }
        let mut grad = vec![0.0; self.layout.len()];
        for (j, p) in self.layout.predictors.iter().enumerate() {
            let z = &self.design_of(j).rows;
            let g = &mut grad[p.range()];
            for (i, &d) in dl_deta[j].iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (gc, zc) in g.iter_mut().zip(z.row(i)) {
                    *gc += zc * d;
                }
            }
        }
        Ok(grad)
    }
}

impl DesignRows {
    #[inline]
    pub fn eta(&self, layout: &ParamLayout, psi: &[f64], j: usize, i: usize) -> f64 {
        let p = &layout.predictors[j];
        let row = self.designs[self.design_index[j]].row(i);
        row.iter()
            .zip(&psi[p.offset..p.offset + p.width])
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn eval_eta(&self, layout: &ParamLayout, psi: &ParamVector) -> Vec<Vec<f64>> {
        (0..self.design_index.len())
            .map(|j| (0..self.nrows).map(|i| self.eta(layout, &psi.0, j, i)).collect())
            .collect()
    }
}
