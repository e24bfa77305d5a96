//! `mixreg benchmark`: simulation studies over the experiment grids.

use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use mixreg::em::EmConfig;
use mixreg::simgen::{
    linear_spec, AdditiveDesign, AdditiveResponse, LinearDesign, OverfitDesign, SimDesign, WeightSetting,
    ADDITIVE_NOISE, ADDITIVE_SCALES, LINEAR_M, LINEAR_N, LINEAR_PM,
};
use mixreg::{Family, OptimConfig, OptimMethod};
use serde::Serialize;

use crate::error::Result;
use crate::experiments::{additive_curve_rmse, median, run_em, run_nmdr, weights_recovered, MethodRun, Trial};
use crate::output::{fmt_float, write_json, CsvOut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// EM against single- and triple-restart NMDR on linear mixtures.
    EmVsNmdr,
    /// The four optimizers on linear mixtures.
    Optimizers,
    /// Additive mixtures with smooth location predictors.
    Additive,
    /// Overfitted component count with entropy penalties.
    Sparsity,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub suite: Suite,
    pub reps: usize,
    pub seed: u64,
    /// Smallest scenario and short runs; for smoke tests.
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub scenario: String,
    pub method: String,
    pub rep: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub scenario: String,
    pub method: String,
    pub metric: String,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub suite: Suite,
    pub reps: usize,
    pub seed: u64,
    pub quick: bool,
    pub medians: Vec<MedianRow>,
    /// Mean rank by test log score per method (1 is best); optimizers suite only.
    pub mean_rank: Option<BTreeMap<String, f64>>,
    /// Fits with no usable result, per method.
    pub failures: BTreeMap<String, usize>,
    pub failed_restarts: BTreeMap<String, usize>,
}

struct Recorder {
    records: Vec<Record>,
}

impl Recorder {
    fn push(&mut self, scenario: &str, method: &str, rep: usize, metric: &str, value: f64) {
        self.records.push(Record {
            scenario: scenario.into(),
            method: method.into(),
            rep,
            metric: metric.into(),
            value,
        });
    }

    fn run(&mut self, scenario: &str, method: &str, rep: usize, run: &MethodRun) {
        self.push(scenario, method, rep, "seconds", run.seconds);
        self.push(scenario, method, rep, "failed_restarts", run.failed_restarts as f64);
        self.push(scenario, method, rep, "failed", f64::from(u8::from(run.scores.is_none())));
        if let Some(s) = &run.scores {
            if let Some(r) = s.rmse {
                self.push(scenario, method, rep, "rmse", r);
            }
            self.push(scenario, method, rep, "pls", s.pls);
            self.push(scenario, method, rep, "ari", s.ari);
            self.push(scenario, method, rep, "accuracy", s.accuracy);
        }
    }
}

fn nmdr_config(quick: bool, seed: u64, restarts: usize) -> OptimConfig {
    OptimConfig {
        method: OptimMethod::Rmsprop,
        learning_rate: Some(0.001),
        restarts,
        seed,
        max_epochs: if quick { 50 } else { 500 },
        patience: if quick { 10 } else { 50 },
        ..OptimConfig::default()
    }
}

fn linear_designs(quick: bool, rep_seed: u64) -> Vec<(String, LinearDesign)> {
    if quick {
        let d = LinearDesign { n: 300, m: 2, p_m: 2, family: Family::Normal, seed: rep_seed };
        return vec![("linear_n300_m2_pm2_normal".into(), d)];
    }
    let mut out = Vec::new();
    for family in [Family::Normal, Family::Laplace, Family::Logistic] {
        for n in LINEAR_N {
            for m in LINEAR_M {
                for p_m in LINEAR_PM {
                    let name = format!("linear_n{n}_m{m}_pm{p_m}_{family}");
                    out.push((name, LinearDesign { n, m, p_m, family, seed: rep_seed }));
                }
            }
        }
    }
    out
}

fn em_vs_nmdr(opts: &BenchOptions, rec: &mut Recorder) -> Result<()> {
    for rep in 0..opts.reps {
        let seed = opts.seed + rep as u64;
        for (name, d) in linear_designs(opts.quick, seed) {
            let trial = Trial::new(&SimDesign::Linear(d), None)?;
            let em = EmConfig {
                seed,
                restarts: if opts.quick { 5 } else { 20 },
                max_iter: if opts.quick { 100 } else { 500 },
                ..EmConfig::default()
            };
            rec.run(&name, "EM", rep, &run_em(&trial, &em)?);
            rec.run(&name, "NMDR", rep, &run_nmdr(&trial, &nmdr_config(opts.quick, seed, 1))?);
            rec.run(&name, "NMDR_3", rep, &run_nmdr(&trial, &nmdr_config(opts.quick, seed, 3))?);
        }
    }
    Ok(())
}

fn optimizers(opts: &BenchOptions, rec: &mut Recorder) -> Result<()> {
    for rep in 0..opts.reps {
        let seed = opts.seed + rep as u64;
        let designs: Vec<(String, LinearDesign)> = linear_designs(opts.quick, seed)
            .into_iter()
            .filter(|(_, d)| opts.quick || d.family == Family::Normal)
            .collect();
        for (name, d) in designs {
            let trial = Trial::new(&SimDesign::Linear(d), None)?;
            for method in OptimMethod::ALL {
                let cfg = OptimConfig {
                    method,
                    learning_rate: None,
                    ..nmdr_config(opts.quick, seed, 1)
                };
                rec.run(&name, method.name(), rep, &run_nmdr(&trial, &cfg)?);
            }
        }
    }
    Ok(())
}

fn additive(opts: &BenchOptions, rec: &mut Recorder) -> Result<()> {
    let mut designs = Vec::new();
    for response in [AdditiveResponse::Gaussian, AdditiveResponse::Poisson] {
        for scale in ADDITIVE_SCALES {
            for weights in [WeightSetting::Uniform, WeightSetting::Skewed] {
                for noise_vars in ADDITIVE_NOISE {
                    designs.push((response, scale, weights, noise_vars));
                }
            }
        }
    }
    if opts.quick {
        designs.truncate(1);
    }
    for rep in 0..opts.reps {
        let seed = opts.seed + rep as u64;
        for &(response, scale, weights, noise_vars) in &designs {
            let d = AdditiveDesign { n: 2500, response, scale, weights, noise_vars, seed };
            let name = format!(
                "additive_{}_s{scale}_{}_noise{noise_vars}",
                serde_plain(&response),
                serde_plain(&weights)
            );
            let trial = Trial::new(&SimDesign::Additive(d.clone()), None)?;
            let cfg = OptimConfig {
                learning_rate: Some(0.003),
                restarts: if opts.quick { 1 } else { 10 },
                max_epochs: if opts.quick { 30 } else { 1000 },
                ..nmdr_config(opts.quick, seed, 1)
            };
            let run = run_nmdr(&trial, &cfg)?;
            rec.run(&name, "NMDR", rep, &run);
            if let Some(psi) = &run.psi {
                let a = trial.assignment(psi)?;
                let rmse = additive_curve_rmse(&trial.model, psi, &d, &a)?;
                for (t, r) in rmse.iter().enumerate() {
                    rec.push(&name, "NMDR", rep, &format!("curve_rmse_{}", t + 1), *r);
                }
            }
        }
    }
    Ok(())
}

fn sparsity(opts: &BenchOptions, rec: &mut Recorder) -> Result<()> {
    const OVERFIT_M: usize = 5;
    let xis: &[f64] = if opts.quick { &[0.0, 0.1] } else { &[0.0, 0.01, 0.1, 0.3] };
    for rep in 0..opts.reps {
        let seed = opts.seed + rep as u64;
        let design = SimDesign::Overfit(OverfitDesign { n: 2500, seed });
        for &xi in xis {
            let spec = linear_spec(Family::Normal, OVERFIT_M, OverfitDesign::P_M).with_xi(xi);
            let trial = Trial::new(&design, Some(spec))?;
            let cfg = OptimConfig {
                method: OptimMethod::Adam,
                max_epochs: if opts.quick { 30 } else { 1000 },
                ..nmdr_config(opts.quick, seed, if opts.quick { 1 } else { 3 })
            };
            let method = format!("NMDR_xi{xi}");
            let run = run_nmdr(&trial, &cfg)?;
            rec.run("overfit_m5", &method, rep, &run);
            if let (Some(s), Some(psi)) = (&run.scores, &run.psi) {
                let a = trial.assignment(psi)?;
                let active = s.pi_bar.iter().filter(|&&p| p >= 0.05).count();
                let ok = weights_recovered(&s.pi_bar, &trial.data.truth.pi, &a, 0.1, 0.05);
                rec.push("overfit_m5", &method, rep, "active_components", active as f64);
                rec.push("overfit_m5", &method, rep, "weights_recovered", f64::from(u8::from(ok)));
            }
        }
    }
    Ok(())
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn summarize(opts: &BenchOptions, records: &[Record]) -> Summary {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    let mut failed_restarts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario.clone(), r.method.clone(), r.metric.clone()))
            .or_default()
            .push(r.value);
        match r.metric.as_str() {
            "failed" => *failures.entry(r.method.clone()).or_default() += r.value as usize,
            "failed_restarts" => *failed_restarts.entry(r.method.clone()).or_default() += r.value as usize,
            _ => {}
        }
    }
    let medians = groups
        .into_iter()
        .map(|((scenario, method, metric), v)| MedianRow {
            scenario,
            method,
            metric,
            median: median(&v),
        })
        .collect();
    let mean_rank = (opts.suite == Suite::Optimizers).then(|| mean_rank_by_pls(records));
    Summary {
        suite: opts.suite,
        reps: opts.reps,
        seed: opts.seed,
        quick: opts.quick,
        medians,
        mean_rank,
        failures,
        failed_restarts,
    }
}

/// Ranks methods within each scenario and replicate by test log score; a
/// method without a score ranks last.
fn mean_rank_by_pls(records: &[Record]) -> BTreeMap<String, f64> {
    let methods: Vec<String> = {
        let mut m: Vec<String> = records.iter().map(|r| r.method.clone()).collect();
        m.sort();
        m.dedup();
        m
    };
    let mut cells: BTreeMap<(String, usize), BTreeMap<String, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == "pls") {
        cells
            .entry((r.scenario.clone(), r.rep))
            .or_default()
            .insert(r.method.clone(), r.value);
    }
    let mut totals: BTreeMap<String, f64> = methods.iter().map(|m| (m.clone(), 0.0)).collect();
    for scores in cells.values() {
        let mut order: Vec<(&String, f64)> = methods
            .iter()
            .map(|m| (m, scores.get(m).copied().filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (rank, (m, _)) in order.into_iter().enumerate() {
            *totals.get_mut(m).expect("known method") += (rank + 1) as f64;
        }
    }
    let n = cells.len().max(1) as f64;
    totals.into_iter().map(|(m, t)| (m, t / n)).collect()
}

pub fn run_benchmark(opts: &BenchOptions, dir: &Path) -> Result<Summary> {
    let mut rec = Recorder { records: Vec::new() };
    match opts.suite {
        Suite::EmVsNmdr => em_vs_nmdr(opts, &mut rec)?,
        Suite::Optimizers => optimizers(opts, &mut rec)?,
        Suite::Additive => additive(opts, &mut rec)?,
        Suite::Sparsity => sparsity(opts, &mut rec)?,
    }
    let mut csv = CsvOut::new(&["scenario", "method", "rep", "metric", "value"]);
    for r in &rec.records {
        csv.row([r.scenario.clone(), r.method.clone(), r.rep.to_string(), r.metric.clone(), fmt_float(r.value)]);
    }
    csv.finish(&dir.join("metrics.csv"))?;
    let summary = summarize(opts, &rec.records);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
