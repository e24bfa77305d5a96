//! Command-line front end: fitting from TOML configs, simulation draws,
//! benchmark suites and entropy-penalty paths.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod output;
pub mod simulate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixreg::simgen::{AdditiveDesign, AdditiveResponse, LinearDesign, OverfitDesign, SimDesign, WeightSetting};
use mixreg::Family;

use crate::benchmark::{run_benchmark, BenchOptions, Suite};
use crate::error::{CliError, Result};
use crate::output::resolve_output_dir;

#[derive(Debug, Parser)]
#[command(name = "mixreg", version, about = "Mixture of experts distributional regression")]
pub struct Cli {
    /// Worker threads for restarts (results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model described by a TOML config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config and MIXREG_OUTPUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a dataset from one of the simulation designs.
    Simulate(SimulateArgs),
    /// Run a simulation study and write metrics.csv and summary.json.
    Benchmark {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// One small scenario with short runs.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit along a grid of entropy weights with warm starts.
    Path {
        #[arg(long)]
        config: PathBuf,
        /// Monotone list of entropy weights, e.g. `0,0.01,0.1`.
        #[arg(long, value_delimiter = ',', required = true)]
        xi: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scenario {
    Linear,
    Additive,
    Overfit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Normal,
    Laplace,
    Logistic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ResponseArg {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightsArg {
    Uniform,
    Skewed,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 2500)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Components (linear).
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Covariates per parameter (linear).
    #[arg(long, default_value_t = 2)]
    pub pm: usize,
    #[arg(long, value_enum, default_value = "normal")]
    pub family: FamilyArg,
    /// Response distribution (additive).
    #[arg(long, value_enum, default_value = "gaussian")]
    pub response: ResponseArg,
    /// Gaussian standard deviation or Poisson rate multiplier (additive).
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub weights: WeightsArg,
    /// Pure-noise covariates (additive).
    #[arg(long, default_value_t = 3)]
    pub noise: usize,
    /// Also write test.csv, drawn from the same truth with this seed.
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn design(&self) -> SimDesign {
        match self.scenario {
            Scenario::Linear => SimDesign::Linear(LinearDesign {
                n: self.n,
                m: self.m,
                p_m: self.pm,
                family: match self.family {
                    FamilyArg::Normal => Family::Normal,
                    FamilyArg::Laplace => Family::Laplace,
                    FamilyArg::Logistic => Family::Logistic,
                },
                seed: self.seed,
            }),
            Scenario::Additive => SimDesign::Additive(AdditiveDesign {
                n: self.n,
                response: match self.response {
                    ResponseArg::Gaussian => AdditiveResponse::Gaussian,
                    ResponseArg::Poisson => AdditiveResponse::Poisson,
                },
                scale: self.scale,
                weights: match self.weights {
                    WeightsArg::Uniform => WeightSetting::Uniform,
                    WeightsArg::Skewed => WeightSetting::Skewed,
                },
                noise_vars: self.noise,
                seed: self.seed,
            }),
            Scenario::Overfit => SimDesign::Overfit(OverfitDesign { n: self.n, seed: self.seed }),
        }
    }
}

/// Runs a parsed command line and returns the output directory.
pub fn run(cli: Cli) -> Result<PathBuf> {
    if cli.threads == 0 {
        return Err(CliError::config("--threads must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Fit { config, out } => fit::run_fit(&config, out.as_deref()),
        Command::Simulate(args) => {
            let dir = resolve_output_dir(args.out.as_deref(), None);
            simulate::run_simulate(&args.design(), args.test_seed, &dir).map_err(|e| match e {
                CliError::Model(mixreg::Error::InvalidSpec(msg)) => CliError::config(format!("simulate: {msg}")),
                e => e,
            })?;
            Ok(dir)
        }
        Command::Benchmark { suite, reps, seed, quick, out } => {
            if reps == 0 {
                return Err(CliError::config("--reps must be positive"));
            }
            let dir = resolve_output_dir(out.as_deref(), None);
            run_benchmark(&BenchOptions { suite, reps, seed, quick }, &dir)?;
            Ok(dir)
        }
        Command::Path { config, xi, out } => fit::run_path(&config, &xi, out.as_deref()),
    })
}
