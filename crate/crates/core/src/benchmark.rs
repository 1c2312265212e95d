//! Accuracy of the budgeted approximators against exact values.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explanation::PredictionTarget;
use crate::game::{evaluate_all_coalitions, GameSetup, GroundTruthPredictor, Imputer, TableGame, ValueTable, DEFAULT_MEMORY_BUDGET};
use crate::grid::{build_time_grid, GridMode};
use crate::metrics::mean_squared_difference;
use crate::rng::stream;
use crate::shapiq::{approximate, exact_ksii, ApproxMethod, ApproximatorConfig, InteractionValues};
use crate::simulate::{build_scenario, with_inert_features, FeatureSampler, ScenarioId, T_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenario: ScenarioId,
    /// Total feature count; features beyond the scenario's three are inert.
    pub p: usize,
    pub k: usize,
    pub target: PredictionTarget,
    pub budgets: Vec<usize>,
    pub methods: Vec<ApproxMethod>,
    pub runs: usize,
    pub background: usize,
    pub n_times: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            scenario: ScenarioId::Numbered(8),
            p: 10,
            k: 3,
            target: PredictionTarget::Survival,
            budgets: vec![64, 128, 256, 512],
            methods: ApproxMethod::ALL.to_vec(),
            runs: 30,
            background: 100,
            n_times: 41,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub method: ApproxMethod,
    pub budget: usize,
    pub run: usize,
    pub mse: f64,
    pub evaluations: usize,
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkConfig,
    pub instance: Vec<f64>,
    pub records: Vec<BenchmarkRecord>,
}

impl BenchmarkResult {
    pub fn mses(&self, method: ApproxMethod, budget: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.budget == budget)
            .map(|r| r.mse)
            .collect()
    }

    pub fn median_mse(&self, method: ApproxMethod, budget: usize) -> Option<f64> {
        median(self.mses(method, budget))
    }

    /// True when every run of `method` at `budget` was flagged unstable.
    pub fn all_unstable(&self, method: ApproxMethod, budget: usize) -> bool {
        let mut it = self.records.iter().filter(|r| r.method == method && r.budget == budget).peekable();
        it.peek().is_some() && it.all(|r| r.unstable)
    }

    /// `method,budget,run,mse`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "budget", "run", "mse"])?;
        for r in &self.records {
            w.write_record([
                r.method.as_str().to_string(),
                r.budget.to_string(),
                r.run.to_string(),
                format!("{:e}", r.mse),
            ])?;
        }
        w.flush().map_err(|e| Error::io("benchmark csv", e))?;
        Ok(())
    }
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// The benchmark game: exact value table of one sampled instance.
pub struct BenchmarkGame {
    pub instance: Vec<f64>,
    pub table: Arc<ValueTable>,
    pub exact: InteractionValues,
}

pub fn benchmark_game(config: &BenchmarkConfig) -> Result<BenchmarkGame> {
    let model = with_inert_features(&build_scenario(config.scenario)?, config.p)?;
    let grid = build_time_grid(T_MAX, config.n_times, GridMode::Even)?;
    let sampler = FeatureSampler::equicorrelated(config.p, 0.0, config.seed)?;
    let background = sampler.sample(config.background);
    let instance = sampler.sample_row(config.background as u64);
    let pred = GroundTruthPredictor::new(model, config.target, grid)?;
    let setup = GameSetup::new(Arc::new(pred), Arc::new(Imputer::marginal(config.p, background)?))?;
    let table = evaluate_all_coalitions(&setup.game(&instance)?, DEFAULT_MEMORY_BUDGET)?;
    let exact = exact_ksii(&table, config.k)?;
    Ok(BenchmarkGame {
        instance,
        table: Arc::new(table),
        exact,
    })
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResult> {
    if config.runs == 0 {
        return Err(Error::invalid("at least one run is required"));
    }
    let full = 1usize << config.p;
    if let Some(b) = config.budgets.iter().find(|&&b| b > full) {
        return Err(Error::invalid(format!("budget {b} exceeds 2^p = {full}")));
    }
    let bench = benchmark_game(config)?;
    let game = TableGame::new(bench.table.clone());
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &budget in &config.budgets {
            for run in 0..config.runs {
                jobs.push((method, budget, run));
            }
        }
    }
    let records = jobs
        .into_par_iter()
        .map(|(method, budget, run)| {
            let seed = stream(config.seed, "benchmark-run", run as u64).random();
            let est = approximate(&game, config.k, &ApproximatorConfig::new(method, budget, seed))?;
            Ok(BenchmarkRecord {
                method,
                budget,
                run,
                mse: mean_squared_difference(&est.values, &bench.exact),
                evaluations: est.diagnostics.evaluations,
                unstable: est.diagnostics.unstable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkResult {
        config: config.clone(),
        instance: bench.instance,
        records,
    })
}
