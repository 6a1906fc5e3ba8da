use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use ippu::config::{ConfigFile, CONFIG_KEYS};
use ippu::harness::report::{emit_report, emit_sweep};
use ippu::harness::validate::{run_all, Budget};
use ippu::harness::{run_monte_carlo, run_sweep, Algorithm, MonteCarloOptions, SweepParam};

/// Monte Carlo simulator for joint IRS phase design, power allocation and
/// user association in a multi-BS mmWave downlink.
#[derive(Debug, Parser)]
#[command(name = "ippu", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write its CSV report.
    Run(RunArgs),
    /// Repeat the experiment over values of one scenario parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Parameter to vary: Pmax (dBm), M, K, N, b or Rmin (bits/s/Hz).
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values of the parameter.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Run the oracle and property checks of the optimizers.
    Validate {
        #[arg(long, default_value_t = 20261016)]
        seed: u64,
        /// Use a tenth of the instances.
        #[arg(long)]
        quick: bool,
    },
    /// Print the built-in configuration as a config file.
    Defaults,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file (TOML); missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Channel draws per user drop.
    #[arg(long, default_value_t = 1)]
    channels_per_scene: usize,
    /// Master seed; defaults to the `seed` key of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated algorithms: ippu, rpbf-nbua, no-irs.
    #[arg(long, value_delimiter = ',', default_value = "ippu,rpbf-nbua,no-irs")]
    algo: Vec<Algorithm>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<(ConfigFile, MonteCarloOptions)> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ConfigFile::default(),
        };
        let options = MonteCarloOptions {
            trials: self.trials,
            channels_per_scene: self.channels_per_scene,
            seed: self.seed.unwrap_or(file.seed),
            algorithms: self.algo.clone(),
            ..MonteCarloOptions::default()
        };
        Ok((file, options))
    }
}

fn config_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML, unknown keys are rejected):\n");
    for (key, doc) in CONFIG_KEYS {
        s.push_str(&format!("  {key:<width$}  {doc}\n"));
    }
    s
}

fn run(args: RunArgs) -> Result<()> {
    let (file, options) = args.load()?;
    let cfg = file.resolve()?;
    let report = run_monte_carlo(&cfg, &options)?;
    emit_report(&report, &args.out)?;
    println!("algorithm,trials,feasible,mean_R_sum,p50_R_sum,mean_EE,converged");
    for s in report.summaries() {
        println!(
            "{},{},{},{:.4},{:.4},{:.4},{}",
            s.algorithm, s.trials, s.feasible, s.mean_r_sum, s.p50_r_sum, s.mean_ee, s.converged
        );
    }
    eprintln!("report written to {}", args.out.display());
    Ok(())
}

fn sweep(args: RunArgs, param: SweepParam, values: &[f64]) -> Result<()> {
    let (file, options) = args.load()?;
    let points = run_sweep(&file, param, values, &options)?;
    emit_sweep(&points, &args.out)?;
    for p in &points {
        println!(
            "{}={} {}: mean R_sum {:.4} (se {:.4}), feasible {}/{}",
            p.param,
            p.value,
            p.summary.algorithm,
            p.summary.mean_r_sum,
            p.summary.std_error(),
            p.summary.feasible,
            p.summary.trials
        );
    }
    Ok(())
}

fn validate(seed: u64, quick: bool) -> Result<bool> {
    let mut budget = Budget::FULL;
    if quick {
        for n in [
            &mut budget.identity,
            &mut budget.majorizer,
            &mut budget.sfp_runs,
            &mut budget.exhaustive,
            &mut budget.auction,
            &mut budget.water_filling,
            &mut budget.zero_forcing,
        ] {
            *n = (*n / 10).max(1);
        }
    }
    let checks = run_all(budget, seed);
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Run(args) => run(args).map(|_| true),
        Command::Sweep { run, param, values } => sweep(run, param, &values).map(|_| true),
        Command::Validate { seed, quick } => validate(seed, quick),
        Command::Defaults => {
            print!("{}", ConfigFile::default().to_toml_string());
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

