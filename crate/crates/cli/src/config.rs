//! TOML run configuration for `mixreg fit` and `mixreg path`.
//!
//! ```toml
//! [model]
//! families = ["normal", "normal"]
//! xi = 0.01
//!
//! [model.predictors.mu]
//! linear = ["x1"]
//! smooth = [{ var = "x2", df = 6 }]
//!
//! [model.predictors."m2.sigma"]   # override for one component
//! linear = ["x1"]
//!
//! [optimizer]
//! method = "adam"
//! restarts = 3
//!
//! [data]
//! path = "train.csv"
//! response = "y"
//! test_fraction = 0.2
//! ```
//!
//! Predictors not mentioned are intercept-only. Relative data paths are
//! resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mixreg::em::EmConfig;
use mixreg::{BasisConfig, ComponentSpec, Family, ModelSpec, OptimConfig, PredictorSpec, SmoothSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Mini-batch first-order optimization.
    #[default]
    Nmdr,
    Em,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimConfig,
    #[serde(default)]
    pub estimator: Estimator,
    /// Used when `estimator = "em"`.
    #[serde(default)]
    pub em: EmConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub families: Vec<String>,
    /// Keyed by parameter name (`mu`, `sigma`, `scale`, `rate`) for every
    /// component that has it, or `m<k>.<param>` for one component.
    #[serde(default)]
    pub predictors: BTreeMap<String, TermList>,
    #[serde(default)]
    pub gating: TermList,
    #[serde(default)]
    pub xi: f64,
    pub default_df: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermList {
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub linear: Vec<String>,
    #[serde(default)]
    pub smooth: Vec<SmoothEntry>,
}

fn yes() -> bool {
    true
}

impl Default for TermList {
    fn default() -> Self {
        TermList {
            intercept: true,
            linear: Vec::new(),
            smooth: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothEntry {
    pub var: Option<String>,
    /// Two variables give a tensor-product smooth.
    pub vars: Option<Vec<String>>,
    pub df: Option<f64>,
    pub lambda: Option<f64>,
    pub num_basis: Option<usize>,
    pub degree: Option<usize>,
    pub penalty_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub response: String,
    pub test_path: Option<PathBuf>,
    /// Share of rows held out for testing when no `test_path` is given.
    pub test_fraction: Option<f64>,
    /// Column of known labels used for accuracy and ARI; not a covariate.
    pub labels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: all_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    /// Reads a config and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.path);
        if let Some(p) = cfg.data.test_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.output.dir.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.spec()?;
        self.optimizer
            .validate()
            .map_err(|e| CliError::config(format!("optimizer: {e}")))?;
        if self.estimator == Estimator::Em {
            self.em.validate().map_err(|e| CliError::config(format!("em: {e}")))?;
        }
        if let Some(f) = self.data.test_fraction {
            if self.data.test_path.is_some() {
                return Err(CliError::config("data: give either test_path or test_fraction, not both"));
            }
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::config(format!("data.test_fraction must lie in (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

impl ModelConfig {
    pub fn families(&self) -> Result<Vec<Family>> {
        if self.families.is_empty() {
            return Err(CliError::config("model.families: at least one family is required"));
        }
        self.families
            .iter()
            .enumerate()
            .map(|(i, name)| {
                Family::from_name(name).ok_or_else(|| {
                    CliError::config(format!(
                        "model.families[{i}]: unknown family `{name}` (expected normal, laplace, logistic or poisson)"
                    ))
                })
            })
            .collect()
    }

    /// Builds and validates the model specification.
    pub fn spec(&self) -> Result<ModelSpec> {
        let families = self.families()?;
        for key in self.predictors.keys() {
            check_predictor_key(key, &families)?;
        }
        let mut components = Vec::with_capacity(families.len());
        for (m, &family) in families.iter().enumerate() {
            let mut params = Vec::with_capacity(family.param_count());
            for &param in family.param_names() {
                let specific = format!("m{}.{param}", m + 1);
                let (key, terms) = match self.predictors.get(&specific) {
                    Some(t) => (specific, Some(t)),
                    None => (param.to_string(), self.predictors.get(param)),
                };
                params.push(match terms {
                    Some(t) => t.to_spec(&format!("model.predictors.{key}"))?,
                    None => PredictorSpec::intercept_only(),
                });
            }
            components.push(ComponentSpec::new(family, params));
        }
        let gating = self.gating.to_spec("model.gating")?;
        let mut spec = ModelSpec::new(components, gating);
        spec.xi = self.xi;
        spec.default_df = self.default_df;
        spec.validate().map_err(|e| CliError::config(format!("model: {e}")))?;
        Ok(spec)
    }
}

fn check_predictor_key(key: &str, families: &[Family]) -> Result<()> {
    let bad = |why: String| Err(CliError::config(format!("model.predictors.{key}: {why}")));
    match key.split_once('.') {
        Some((comp, param)) => {
            let m = comp
                .strip_prefix('m')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1 && k <= families.len());
            let Some(m) = m else {
                return bad(format!("expected m1..m{} before the dot", families.len()));
            };
            let family = families[m - 1];
            if !family.param_names().contains(&param) {
                return bad(format!("{family} has parameters {:?}", family.param_names()));
            }
        }
        None => {
            if !families.iter().any(|f| f.param_names().contains(&key)) {
                return bad("no component has this parameter".into());
            }
        }
    }
    Ok(())
}

impl TermList {
    fn to_spec(&self, owner: &str) -> Result<PredictorSpec> {
        let mut spec = PredictorSpec {
            intercept: self.intercept,
            linear: self.linear.clone(),
            smooth: Vec::with_capacity(self.smooth.len()),
        };
        for (i, s) in self.smooth.iter().enumerate() {
            spec.smooth.push(s.to_spec(&format!("{owner}.smooth[{i}]"))?);
        }
        Ok(spec)
    }
}

impl SmoothEntry {
    fn to_spec(&self, owner: &str) -> Result<SmoothSpec> {
        let vars = match (&self.var, &self.vars) {
            (Some(v), None) => vec![v.clone()],
            (None, Some(vs)) if (1..=2).contains(&vs.len()) => vs.clone(),
            (None, Some(vs)) => {
                return Err(CliError::config(format!("{owner}: vars takes one or two names, got {}", vs.len())))
            }
            _ => return Err(CliError::config(format!("{owner}: give exactly one of `var` or `vars`"))),
        };
        let d = BasisConfig::default();
        let basis = BasisConfig {
            num_basis: self.num_basis.unwrap_or(d.num_basis),
            degree: self.degree.unwrap_or(d.degree),
            penalty_order: self.penalty_order.unwrap_or(d.penalty_order),
            df: self.df,
            lambda: self.lambda,
        };
        basis.validate().map_err(|e| CliError::config(format!("{owner}: {e}")))?;
        Ok(SmoothSpec { vars, basis })
    }
}
