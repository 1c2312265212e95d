//! `survint` command-line front end.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survint::shapiq::ApproxMethod;
use survint::simulate::ScenarioId;
use survint::validation::Suite;
use survint::PredictionTarget;

use config::{CommandKind, ImputerKind, InstanceSpec, Manifest, MethodKind, ModelKind, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "survint", version, about = "Time-indexed Shapley interaction explanations for survival models")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration; a previous run-manifest.json works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $SURVINT_OUT_DIR or ./survint-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a survival dataset from a ground-truth scenario.
    Simulate(SimulateArgs),
    /// Explain one instance with order-k interaction attributions over time.
    Explain(ExplainArgs),
    /// Run the numerical checks of the decomposition theory.
    Validate(ValidateArgs),
    /// Approximation error against exact values as a function of budget.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario 1..10 or dep_demo.
    #[arg(long)]
    scenario: Option<ScenarioId>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature correlation.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Also write a train/test split.
    #[arg(long)]
    split: bool,
    /// Training rows of the split [default: 80%].
    #[arg(long)]
    n_train: Option<usize>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Dataset CSV used as background and instance source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Ground-truth model JSON.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Total feature count; extra features are inert.
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Row index or comma-separated feature values.
    #[arg(long, allow_hyphen_values = true)]
    instance: Option<InstanceSpec>,
    /// loghazard, hazard or survival.
    #[arg(long)]
    target: Option<PredictionTarget>,
    #[arg(long)]
    order: Option<usize>,
    /// exact, mc, perm or regression.
    #[arg(long)]
    method: Option<MethodKind>,
    #[arg(long)]
    budget: Option<usize>,
    /// Draw a fresh coalition sample at every timepoint.
    #[arg(long)]
    resample_per_timepoint: bool,
    #[arg(long, value_enum)]
    imputer: Option<ImputerKind>,
    #[arg(long)]
    conditional_samples: Option<usize>,
    /// Background rows used for marginal imputation.
    #[arg(long)]
    background: Option<usize>,
    #[arg(long)]
    timepoints: Option<usize>,
    /// Also write Savitzky-Golay smoothed curves.
    #[arg(long)]
    smooth: bool,
    #[arg(long)]
    savgol_window: Option<usize>,
    #[arg(long)]
    savgol_order: Option<usize>,
    /// Also write an SVG line plot.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Run only these suites (comma-separated).
    #[arg(long, value_delimiter = ',')]
    only: Vec<Suite>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    timepoints: Option<usize>,
    /// Multiplies every tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
    #[arg(long)]
    cox_seeds: Option<usize>,
    #[arg(long)]
    survival_draws: Option<usize>,
    #[arg(long)]
    conditional_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Total feature count; extra features are inert.
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    target: Option<PredictionTarget>,
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<ApproxMethod>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    background: Option<usize>,
    #[arg(long)]
    timepoints: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! set {
    ($cfg:ident, $args:ident: $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

macro_rules! set_opt {
    ($cfg:ident, $args:ident: $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = Some(v); })*
    };
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.out.is_some() {
        cfg.out_dir = cli.out;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match cli.command {
        Command::Simulate(a) => {
            cfg.command = Some(CommandKind::Simulate);
            set!(cfg, a: n);
            set_opt!(cfg, a: scenario, seed, rho, n_train);
            cfg.split |= a.split;
        }
        Command::Explain(a) => {
            cfg.command = Some(CommandKind::Explain);
            set!(cfg, a: n, model, method, imputer, conditional_samples, timepoints, savgol_window, savgol_order);
            set_opt!(cfg, a: scenario, data, model_file, features, seed, rho, instance, target, order, budget, background);
            cfg.resample_per_timepoint |= a.resample_per_timepoint;
            cfg.smooth |= a.smooth;
            cfg.svg |= a.svg;
        }
        Command::Validate(a) => {
            cfg.command = Some(CommandKind::Validate);
            set!(cfg, a: n, timepoints, tolerance_scale, cox_seeds, survival_draws, conditional_samples);
            set_opt!(cfg, a: seed);
            if !a.only.is_empty() {
                cfg.only = a.only;
            }
        }
        Command::Benchmark(a) => {
            cfg.command = Some(CommandKind::Benchmark);
            set!(cfg, a: runs, timepoints);
            set_opt!(cfg, a: scenario, features, order, target, background, seed);
            if !a.budgets.is_empty() {
                cfg.budgets = a.budgets;
            }
            if !a.methods.is_empty() {
                cfg.methods = a.methods;
            }
        }
    }
    if cfg.seed.is_none() {
        cfg.seed = Some(match cfg.command {
            Some(CommandKind::Benchmark) => survint::benchmark::BenchmarkConfig::default().seed,
            _ => commands::default_seed(),
        });
    }
    cfg.resolve_out_dir();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    let dir = cfg.out_dir();
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let outcome = match cfg.command {
        Some(CommandKind::Simulate) => commands::simulate(&cfg)?,
        Some(CommandKind::Explain) => commands::explain_cmd(&cfg)?,
        Some(CommandKind::Validate) => commands::validate_cmd(&cfg)?,
        Some(CommandKind::Benchmark) => commands::benchmark_cmd(&cfg)?,
        None => unreachable!("resolve always sets the command"),
    };
    let manifest = Manifest::new(&cfg, outcome.outputs).write(dir)?;
    eprintln!("wrote {}", manifest.display());
    if outcome.failed_checks > 0 {
        return Err(CliError::Validation {
            failed: outcome.failed_checks,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
