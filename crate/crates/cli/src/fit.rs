//! `mixreg fit` and `mixreg path`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mixreg::em::em_fit;
use mixreg::metrics::{accuracy, adjusted_rand_index, predictive_log_score};
use mixreg::optim::RestartSummary;
use mixreg::{fit, Column, DataTable, Family, MixtureModel, ParamVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Estimator, Format, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{fmt_float, resolve_output_dir, write_json, CsvOut};

/// Covariates and response of one split.
#[derive(Debug, Clone)]
pub struct Split {
    pub covariates: DataTable,
    pub y: Vec<f64>,
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Split,
    pub test: Option<Split>,
}

fn read_split(path: &Path, cfg: &RunConfig) -> Result<Split> {
    let mut table = DataTable::from_csv_path(path)?;
    let response = &cfg.data.response;
    let y = match table.take(response) {
        Ok(Column::Numeric(v)) => v,
        Ok(Column::Categorical(_)) => {
            return Err(CliError::config(format!(
                "data.response: column `{response}` in {} is not numeric",
                path.display()
            )))
        }
        Err(_) => {
            return Err(CliError::config(format!(
                "data.response: no column `{response}` in {}",
                path.display()
            )))
        }
    };
    let labels = match &cfg.data.labels {
        None => None,
        Some(name) => {
            let bad = || CliError::config(format!("data.labels: column `{name}` must hold labels 0, 1, 2, ..."));
            match table.take(name).map_err(|_| {
                CliError::config(format!("data.labels: no column `{name}` in {}", path.display()))
            })? {
                Column::Numeric(v) => Some(
                    v.iter()
                        .map(|&l| (l >= 0.0 && l.fract() == 0.0).then_some(l as usize).ok_or_else(bad))
                        .collect::<Result<Vec<_>>>()?,
                ),
                Column::Categorical(_) => return Err(bad()),
            }
        }
    };
    Ok(Split {
        covariates: table,
        y,
        labels,
    })
}

fn subset(s: &Split, rows: &[usize]) -> Split {
    Split {
        covariates: s.covariates.select_rows(rows),
        y: rows.iter().map(|&i| s.y[i]).collect(),
        labels: s.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
    }
}

/// Reads the training file and the test split, if any. A `test_fraction`
/// holdout is drawn with the optimizer seed.
pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let all = read_split(&cfg.data.path, cfg)?;
    if let Some(p) = &cfg.data.test_path {
        return Ok(Dataset {
            train: all,
            test: Some(read_split(p, cfg)?),
        });
    }
    let Some(frac) = cfg.data.test_fraction else {
        return Ok(Dataset { train: all, test: None });
    };
    let n = all.y.len();
    let n_test = ((n as f64) * frac).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(CliError::config(format!(
            "data.test_fraction: {frac} of {n} rows leaves an empty split"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.optimizer.seed));
    let (test, train) = rows.split_at(n_test);
    let (mut test, mut train) = (test.to_vec(), train.to_vec());
    test.sort_unstable();
    train.sort_unstable();
    Ok(Dataset {
        train: subset(&all, &train),
        test: Some(subset(&all, &test)),
    })
}

pub fn build_model(cfg: &RunConfig, train: &Split) -> Result<MixtureModel> {
    let spec = cfg.model.spec()?;
    Ok(MixtureModel::new(spec, &train.covariates, train.y.clone())?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmRunSummary {
    pub index: usize,
    pub seed: u64,
    pub iterations: usize,
    pub loglik: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Mean log-likelihood per training row.
    pub train_loglik: f64,
    pub test_pls: Option<f64>,
    pub test_rows: usize,
    pub extrapolated_test_rows: usize,
    pub accuracy: Option<f64>,
    pub ari: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub config: RunConfig,
    pub families: Vec<Family>,
    pub coefficients: Vec<Coefficient>,
    pub psi: Vec<f64>,
    /// Mixture weights averaged over the training rows.
    pub pi_bar: Vec<f64>,
    pub train_trace: Vec<f64>,
    pub val_trace: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub restarts: Vec<RestartSummary>,
    pub em_runs: Vec<EmRunSummary>,
    pub failed_restarts: usize,
    pub warnings: Vec<String>,
    pub metrics: Metrics,
    pub wall_time: f64,
}

/// Fitted model with everything needed to write its outputs.
pub struct Fitted {
    pub model: MixtureModel,
    pub psi: ParamVector,
    pub report: FitReport,
}

/// Fits `cfg` on `data`, optionally warm-started from `init`.
pub fn fit_model(cfg: &RunConfig, data: &Dataset, model: MixtureModel, init: Option<&ParamVector>) -> Result<Fitted> {
    let start = Instant::now();
    let mut report = FitReport {
        config: cfg.clone(),
        families: model.families().to_vec(),
        coefficients: Vec::new(),
        psi: Vec::new(),
        pi_bar: Vec::new(),
        train_trace: Vec::new(),
        val_trace: Vec::new(),
        loglik_trace: Vec::new(),
        best_epoch: None,
        restarts: Vec::new(),
        em_runs: Vec::new(),
        failed_restarts: 0,
        warnings: Vec::new(),
        metrics: Metrics {
            train_loglik: f64::NAN,
            test_pls: None,
            test_rows: 0,
            extrapolated_test_rows: 0,
            accuracy: None,
            ari: None,
        },
        wall_time: 0.0,
    };
    let psi = match cfg.estimator {
        Estimator::Nmdr => {
            let r = fit(&model, &cfg.optimizer, init)?;
            report.train_trace = r.train_trace;
            report.val_trace = r.val_trace;
            report.best_epoch = Some(r.best_epoch);
            report.restarts = r.restarts;
            report.failed_restarts = r.diverged_restarts;
            report.warnings = r.warnings;
            r.psi
        }
        Estimator::Em => {
            let r = em_fit(&model, &cfg.em)?;
            let best = r.best_or_err()?.clone();
            report.failed_restarts = r.failed_runs();
            report.em_runs = r
                .runs
                .iter()
                .map(|run| EmRunSummary {
                    index: run.restart,
                    seed: run.seed,
                    iterations: run.iterations(),
                    loglik: run.loglik(),
                    failure: run.failure.as_ref().map(ToString::to_string),
                })
                .collect();
            report.loglik_trace = best.loglik_trace;
            best.psi
        }
    };
    report.coefficients = model
        .design()
        .coefficient_names()
        .into_iter()
        .zip(&psi.0)
        .map(|(name, &value)| Coefficient { name, value })
        .collect();
    report.psi = psi.0.clone();
    let rows = model.all_rows();
    report.pi_bar = model.mean_weights(&psi, &rows)?;
    let ll = model.row_log_likelihood(&psi)?;
    report.metrics.train_loglik = ll.iter().sum::<f64>() / ll.len() as f64;
    if let Some(test) = &data.test {
        let (ld, extrapolated) = model.predict_log_density(&psi, &test.covariates, &test.y)?;
        report.metrics.test_pls = Some(predictive_log_score(&model, &psi, &test.covariates, &test.y)?);
        report.metrics.test_rows = ld.len();
        report.metrics.extrapolated_test_rows = extrapolated.iter().filter(|&&e| e).count();
        if report.metrics.extrapolated_test_rows > 0 {
            report.warnings.push(format!(
                "{} test rows lie outside the training range of a smooth",
                report.metrics.extrapolated_test_rows
            ));
        }
    }
    if let Some(labels) = &data.train.labels {
        let est = model.responsibilities(&psi, &rows)?.map_labels();
        report.metrics.accuracy = Some(accuracy(labels, &est)?);
        if labels.len() >= 2 {
            report.metrics.ari = Some(adjusted_rand_index(labels, &est)?);
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Fitted { model, psi, report })
}

fn component_columns(model: &MixtureModel) -> Vec<String> {
    let mut cols = Vec::new();
    for (m, f) in model.families().iter().enumerate() {
        for p in f.param_names() {
            cols.push(format!("m{}.{p}", m + 1));
        }
    }
    cols
}

/// Writes `result.json`, `responsibilities.csv` and `fitted.csv` as configured.
pub fn write_fit(fitted: &Fitted, dir: &Path) -> Result<()> {
    let out = &fitted.report.config.output;
    if out.wants(Format::Json) {
        write_json(&dir.join("result.json"), &fitted.report)?;
    }
    if !out.wants(Format::Csv) {
        return Ok(());
    }
    let model = &fitted.model;
    let m = model.num_components();
    let resp = model.responsibilities(&fitted.psi, &model.all_rows())?;
    let mut header = vec!["row".to_string()];
    header.extend((1..=m).map(|k| format!("m{k}")));
    let mut csv = CsvOut::new(&header);
    for i in 0..resp.nrows() {
        csv.row(std::iter::once(i.to_string()).chain(resp.row(i).iter().map(|&v| fmt_float(v))));
    }
    csv.finish(&dir.join("responsibilities.csv"))?;

    let pred = model.predict_training(&fitted.psi)?;
    let labels = resp.map_labels();
    let mut header = vec!["row".to_string(), "y".to_string()];
    header.extend(component_columns(model));
    header.extend((1..=m).map(|k| format!("pi{k}")));
    header.push("label".into());
    let mut csv = CsvOut::new(&header);
    for i in 0..model.nrows() {
        let mut row = vec![i.to_string(), fmt_float(model.y()[i])];
        for comp in &pred.theta {
            row.extend(comp.iter().map(|p| fmt_float(p[i])));
        }
        row.extend(pred.weights(i).iter().map(|&v| fmt_float(v)));
        row.push(labels[i].to_string());
        csv.row(row);
    }
    csv.finish(&dir.join("fitted.csv"))
}

pub fn run_fit(config: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let cfg = RunConfig::load(config)?;
    let dir = resolve_output_dir(out, cfg.output.dir.as_deref());
    let data = load_data(&cfg)?;
    let model = build_model(&cfg, &data.train)?;
    let fitted = fit_model(&cfg, &data, model, None)?;
    write_fit(&fitted, &dir)?;
    Ok(dir)
}

/// Fits along a monotone grid of entropy weights, warm-starting each fit
/// from the previous one, and writes `path.csv`.
pub fn run_path(config: &Path, grid: &[f64], out: Option<&Path>) -> Result<PathBuf> {
    if grid.is_empty() {
        return Err(CliError::config("--xi: give at least one value"));
    }
    if let Some(x) = grid.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(CliError::config(format!("--xi: values must be non-negative, got {x}")));
    }
    let up = grid.windows(2).all(|w| w[0] <= w[1]);
    let down = grid.windows(2).all(|w| w[0] >= w[1]);
    if !(up || down) {
        return Err(CliError::config("--xi: the grid must be monotone"));
    }
    let mut cfg = RunConfig::load(config)?;
    if cfg.estimator == Estimator::Em {
        return Err(CliError::config("estimator: the entropy path needs estimator = \"nmdr\""));
    }
    let dir = resolve_output_dir(out, cfg.output.dir.as_deref());
    let data = load_data(&cfg)?;
    let mut model = build_model(&cfg, &data.train)?;
    let mut csv = CsvOut::new(&["xi", "component", "pi_hat", "train_loglik", "pls"]);
    let mut warm: Option<ParamVector> = None;
    for &xi in grid {
        model.set_xi(xi)?;
        cfg.model.xi = xi;
        let fitted = fit_model(&cfg, &data, model, warm.as_ref())?;
        let pls = fitted.report.metrics.test_pls.map(fmt_float).unwrap_or_default();
        for (k, &p) in fitted.report.pi_bar.iter().enumerate() {
            csv.row([
                fmt_float(xi),
                (k + 1).to_string(),
                fmt_float(p),
                fmt_float(fitted.report.metrics.train_loglik),
                pls.clone(),
            ]);
        }
        warm = Some(fitted.psi);
        model = fitted.model;
    }
    csv.finish(&dir.join("path.csv"))?;
    Ok(dir)
}
