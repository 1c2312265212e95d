use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use survint::benchmark::{run_benchmark, BenchmarkConfig};
use survint::game::{CoxPredictor, GameSetup, GroundTruthPredictor, Imputer, Predictor};
use survint::metrics::{smooth_explanation, timewise_summary};
use survint::shapiq::{explain, ApproximatorConfig, Method};
use survint::simulate::{
    build_scenario, simulate_dataset, train_test_split, with_inert_features, FeatureSampler, ScenarioId,
    SimulationConfig, T_MAX,
};
use survint::survmodel::{fit_coxph, GroundTruthModel};
use survint::validation::{run_validation, Suite, ValidationConfig};
use survint::{build_time_grid, GridMode, InteractionExplanation, PredictionTarget, SurvivalDataset};

use crate::config::{ImputerKind, InstanceSpec, MethodKind, ModelKind, RunConfig};
use crate::error::CliError;
use crate::svg;

/// Files written by a command, relative to the output directory.
pub struct Outcome {
    pub outputs: Vec<String>,
    pub failed_checks: usize,
}

impl Outcome {
    fn files(outputs: Vec<String>) -> Self {
        Outcome {
            outputs,
            failed_checks: 0,
        }
    }
}

pub fn default_seed() -> u64 {
    ValidationConfig::default().seed
}

/// Maximum feature count for the benchmark's exact oracle.
pub const BENCHMARK_MAX_FEATURES: usize = 16;

fn write_text(dir: &Path, name: &str, text: &str, outputs: &mut Vec<String>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(())
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<fs::File>, CliError> {
    let path = dir.join(name);
    let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(BufWriter::new(f))
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v).map_err(survint::Error::from)? + "\n")
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.features.is_some() {
        return Err(CliError::Usage("simulate generates the three scenario features; drop --features".into()));
    }
    let scenario = cfg.scenario.unwrap_or(ScenarioId::Numbered(1));
    let mut sim_cfg = SimulationConfig::new(scenario, cfg.seed.unwrap_or_else(default_seed));
    sim_cfg.n = cfg.n;
    if let Some(r) = cfg.rho {
        sim_cfg.rho = r;
    }
    let sim = simulate_dataset(&sim_cfg)?;
    let dir = cfg.out_dir();
    let mut out = Vec::new();
    sim.dataset.write_csv(create(dir, "data.csv", &mut out)?)?;
    write_text(dir, "metadata.json", &json(&sim.metadata)?, &mut out)?;
    write_text(dir, "model.json", &(sim.model.to_json()? + "\n"), &mut out)?;
    if cfg.split {
        let n_train = cfg.n_train.unwrap_or(cfg.n * 4 / 5);
        let (train, test) = train_test_split(&sim.dataset, n_train, sim_cfg.seed)?;
        train.write_csv(create(dir, "train.csv", &mut out)?)?;
        test.write_csv(create(dir, "test.csv", &mut out)?)?;
    }
    println!(
        "scenario {} n={} seed={} rho={} censoring rate {:.3}",
        sim.metadata.scenario, sim.metadata.n, sim.metadata.seed, sim.metadata.rho, sim.metadata.censoring_rate
    );
    Ok(Outcome::files(out))
}

/// Background rows, feature distribution and model for an explanation.
struct Source {
    p: usize,
    rows: Vec<f64>,
    gaussian: (Vec<f64>, DMatrix<f64>),
    truth: Option<GroundTruthModel>,
    dataset: Option<SurvivalDataset>,
}

fn empirical_gaussian(rows: &[f64], p: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len() / p;
    let mut mean = vec![0.0; p];
    for r in rows.chunks_exact(p) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::zeros(p, p);
    for r in rows.chunks_exact(p) {
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1).max(1) as f64;
            }
        }
    }
    (mean, cov)
}

fn load_source(cfg: &RunConfig, seed: u64) -> Result<Source, CliError> {
    let scenario = cfg.scenario.unwrap_or(ScenarioId::Numbered(1));
    let truth = |p: usize| -> Result<GroundTruthModel, CliError> {
        let base = match &cfg.model_file {
            Some(path) => GroundTruthModel::load(path)?,
            None => build_scenario(scenario)?,
        };
        if base.p() > p {
            return Err(CliError::Usage(format!(
                "model has {} features but the data has {p}",
                base.p()
            )));
        }
        Ok(with_inert_features(&base, p)?)
    };
    if let Some(path) = &cfg.data {
        let data = SurvivalDataset::load(path)?;
        let p = data.p();
        let rows = data.features().to_vec();
        return Ok(Source {
            p,
            gaussian: empirical_gaussian(&rows, p),
            truth: match cfg.model {
                ModelKind::Truth => Some(truth(p)?),
                ModelKind::Cox => None,
            },
            rows,
            dataset: Some(data),
        });
    }
    let mut sim_cfg = SimulationConfig::new(scenario, seed);
    sim_cfg.n = cfg.n;
    if let Some(r) = cfg.rho {
        sim_cfg.rho = r;
    }
    let p = cfg.features.unwrap_or(3);
    if p > 3 {
        let sampler = FeatureSampler::equicorrelated(p, sim_cfg.rho, seed)?;
        return Ok(Source {
            p,
            rows: sampler.sample(cfg.n),
            gaussian: (sampler.mean().to_vec(), sampler.covariance().clone()),
            truth: Some(truth(p)?),
            dataset: None,
        });
    }
    let sampler = sim_cfg.sampler()?;
    let sim = simulate_dataset(&sim_cfg)?;
    Ok(Source {
        p,
        rows: sim.dataset.features().to_vec(),
        gaussian: (sampler.mean().to_vec(), sampler.covariance().clone()),
        truth: match cfg.model {
            ModelKind::Truth => Some(truth(p)?),
            ModelKind::Cox => None,
        },
        dataset: Some(sim.dataset),
    })
}

fn resolve_instance(spec: &InstanceSpec, rows: &[f64], p: usize) -> Result<Vec<f64>, CliError> {
    match spec {
        InstanceSpec::Index(i) => {
            let n = rows.len() / p;
            if *i >= n {
                return Err(CliError::Usage(format!("instance index {i} out of range (0..{n})")));
            }
            Ok(rows[i * p..(i + 1) * p].to_vec())
        }
        InstanceSpec::Values(v) if v.len() == p => Ok(v.clone()),
        InstanceSpec::Values(v) => Err(CliError::Usage(format!(
            "instance has {} values but the model has {p} features",
            v.len()
        ))),
    }
}

pub fn explain_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let seed = cfg.seed.unwrap_or_else(default_seed);
    let target = cfg.target.unwrap_or(match cfg.model {
        ModelKind::Truth => PredictionTarget::LogHazard,
        ModelKind::Cox => PredictionTarget::Survival,
    });
    let k = cfg.order.unwrap_or(2);
    let src = load_source(cfg, seed)?;
    let p = src.p;
    if k > p {
        return Err(CliError::Usage(format!("--order {k} exceeds the {p} features")));
    }
    let method = match cfg.method {
        MethodKind::Exact => {
            if p > survint::MAX_EXACT_PLAYERS {
                return Err(CliError::Usage(format!("exact explanation supports at most {} features", survint::MAX_EXACT_PLAYERS)));
            }
            Method::Exact
        }
        MethodKind::Approx(m) => {
            let budget = cfg.budget.unwrap_or(512.min(1usize << p.min(62)));
            let mut ac = ApproximatorConfig::new(m, budget, seed);
            ac.resample_per_timepoint = cfg.resample_per_timepoint;
            ac.validate(p, k).map_err(|e| CliError::Usage(e.to_string()))?;
            Method::Approximate(ac)
        }
    };
    let x = resolve_instance(cfg.instance.as_ref().unwrap_or(&InstanceSpec::Index(0)), &src.rows, p)?;
    let n_bg = cfg.background.map_or(src.rows.len() / p, |b| b.min(src.rows.len() / p));
    if n_bg == 0 {
        return Err(CliError::Usage("--background must be positive".into()));
    }
    let background = src.rows[..n_bg * p].to_vec();

    let grid = build_time_grid(T_MAX, cfg.timepoints, GridMode::Even)?;
    let predictor: Arc<dyn Predictor> = match (&src.truth, &src.dataset) {
        (Some(model), _) => Arc::new(GroundTruthPredictor::new(model.clone(), target, grid)?),
        (None, Some(data)) => Arc::new(CoxPredictor::new(fit_coxph(data)?, target, grid)?),
        (None, None) => unreachable!("a Cox model is always fitted to a dataset"),
    };
    let imputer = match cfg.imputer {
        ImputerKind::Marginal => Imputer::marginal(p, background)?,
        ImputerKind::Conditional => {
            let (mean, cov) = src.gaussian.clone();
            Imputer::conditional_gaussian(mean, cov, cfg.conditional_samples, seed)?
        }
    };
    let setup = GameSetup::new(predictor, Arc::new(imputer))?;
    let game = setup.game(&x)?;
    let (expl, diag) = explain(&game, k, &method)?;

    let dir = cfg.out_dir();
    let mut out = Vec::new();
    expl.write_csv(create(dir, "explanation.csv", &mut out)?)?;
    write_text(dir, "explanation.json", &(expl.to_json()? + "\n"), &mut out)?;
    write_text(dir, "diagnostics.json", &json(&diag)?, &mut out)?;
    write_summary(&expl, dir, "summary.csv", &mut out)?;
    let title = format!("{target} attributions, order {k}");
    if cfg.smooth {
        let smoothed = smooth_explanation(&expl, cfg.savgol_window, cfg.savgol_order)?;
        smoothed.write_csv(create(dir, "explanation-smoothed.csv", &mut out)?)?;
        write_text(dir, "explanation-smoothed.json", &(smoothed.to_json()? + "\n"), &mut out)?;
        write_summary(&smoothed, dir, "summary-smoothed.csv", &mut out)?;
        if cfg.svg {
            write_text(dir, "explanation-smoothed.svg", &svg::render(&smoothed, &(title.clone() + ", smoothed")), &mut out)?;
        }
    }
    if cfg.svg {
        write_text(dir, "explanation.svg", &svg::render(&expl, &title), &mut out)?;
    }

    println!("instance {x:?}; target {target}; order {k}; method {}", cfg.method);
    print!("evaluations {}", diag.evaluations);
    if let Some(r) = diag.rank {
        print!("; design rank {r} of {}", diag.basis_size.unwrap_or(0));
    }
    if diag.unstable {
        print!("; unstable (ridge applied)");
    }
    println!();
    println!("{:<12} {:>12} {:>12}", "coalition", "mean", "sd");
    for (c, s) in timewise_summary(&expl) {
        println!("{:<12} {:>12.4} {:>12.4}", format!("{{{c}}}"), s.mean, s.sd);
    }
    Ok(Outcome::files(out))
}

fn write_summary(expl: &InteractionExplanation, dir: &Path, name: &str, out: &mut Vec<String>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(dir, name, out)?);
    let wrap = |e: csv::Error| CliError::Compute(e.into());
    w.write_record(["coalition", "mean", "sd"]).map_err(wrap)?;
    for (c, s) in timewise_summary(expl) {
        w.write_record([c.to_string(), format!("{:e}", s.mean), format!("{:e}", s.sd)])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(&dir.join(name), e))
}

pub fn validate_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let vc = ValidationConfig {
        seed: cfg.seed.unwrap_or_else(default_seed),
        n: cfg.n,
        n_times: cfg.timepoints,
        tolerance_scale: cfg.tolerance_scale,
        cox_seeds: cfg.cox_seeds,
        survival_draws: cfg.survival_draws,
        conditional_samples: cfg.conditional_samples,
        ..ValidationConfig::default()
    };
    let suites: Vec<Suite> = if cfg.only.is_empty() {
        Suite::ALL.to_vec()
    } else {
        Suite::ALL.into_iter().filter(|s| cfg.only.contains(s)).collect()
    };
    let report = run_validation(&suites, &vc)?;
    let dir = cfg.out_dir();
    let mut out = Vec::new();
    report.write_checks_csv(create(dir, "checks.csv", &mut out)?)?;
    if !report.sigma.is_empty() {
        report.write_sigma_csv(create(dir, "sigma.csv", &mut out)?)?;
    }
    write_text(dir, "report.json", &json(&report)?, &mut out)?;
    for c in &report.checks {
        println!("{c}");
    }
    let failed = report.failures().count();
    println!("{} of {} checks passed", report.checks.len() - failed, report.checks.len());
    Ok(Outcome {
        outputs: out,
        failed_checks: failed,
    })
}

pub fn benchmark_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let defaults = BenchmarkConfig::default();
    let bc = BenchmarkConfig {
        scenario: cfg.scenario.unwrap_or(defaults.scenario),
        p: cfg.features.unwrap_or(defaults.p),
        k: cfg.order.unwrap_or(defaults.k),
        target: cfg.target.unwrap_or(defaults.target),
        budgets: cfg.budgets.clone(),
        methods: cfg.methods.clone(),
        runs: cfg.runs,
        background: cfg.background.unwrap_or(defaults.background),
        n_times: cfg.timepoints,
        seed: cfg.seed.unwrap_or(defaults.seed),
    };
    if bc.p > BENCHMARK_MAX_FEATURES {
        return Err(CliError::Usage(format!(
            "benchmark needs exact values; --features must be at most {BENCHMARK_MAX_FEATURES}"
        )));
    }
    if bc.k > bc.p {
        return Err(CliError::Usage(format!("--order {} exceeds the {} features", bc.k, bc.p)));
    }
    if let Some(b) = bc.budgets.iter().find(|&&b| b > 1 << bc.p) {
        return Err(CliError::Usage(format!("budget {b} exceeds 2^p = {}", 1usize << bc.p)));
    }
    for &m in &bc.methods {
        for &b in &bc.budgets {
            ApproximatorConfig::new(m, b, bc.seed)
                .validate(bc.p, bc.k)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    let result = run_benchmark(&bc)?;
    let dir = cfg.out_dir();
    let mut out = Vec::new();
    result.write_csv(create(dir, "benchmark.csv", &mut out)?)?;

    let mut w = csv::Writer::from_writer(create(dir, "benchmark-summary.csv", &mut out)?);
    let wrap = |e: csv::Error| CliError::Compute(e.into());
    w.write_record(["method", "budget", "median_mse", "unstable_runs"]).map_err(wrap)?;
    println!("{:<12} {:>8} {:>14} {:>9}", "method", "budget", "median MSE", "unstable");
    for &m in &bc.methods {
        for &b in &bc.budgets {
            let med = result.median_mse(m, b).unwrap_or(f64::NAN);
            let unstable = result.records.iter().filter(|r| r.method == m && r.budget == b && r.unstable).count();
            w.write_record([m.as_str().to_string(), b.to_string(), format!("{med:e}"), unstable.to_string()])
                .map_err(wrap)?;
            println!("{:<12} {:>8} {:>14.4e} {:>9}", m.as_str(), b, med, unstable);
        }
    }
    w.flush().map_err(|e| CliError::io(&dir.join("benchmark-summary.csv"), e))?;
    Ok(Outcome::files(out))
}

