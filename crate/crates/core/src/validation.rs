//! Empirical checks of the decomposition theory on the simulated models.
//!
//! Each suite returns a list of [`Check`]s with the measured quantity, the
//! threshold and the outcome. Tolerance thresholds can be scaled (a scale of
//! zero forces every tolerance check to fail, which is how the negative path
//! is exercised).

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::explanation::{InteractionExplanation, PredictionTarget};
use crate::game::{evaluate_all_coalitions, GameSetup, GroundTruthPredictor, Imputer, DEFAULT_MEMORY_BUDGET};
use crate::grid::{build_time_grid, GridMode, TimeGrid};
use crate::metrics::{
    classify_time_dependence, concordance_index, integrated_brier, local_accuracy, time_variation, timewise_summary,
};
use crate::rng::stream;
use crate::shapiq::{exact_ksii, moebius_transform};
use crate::simulate::{
    build_scenario, simulate_dataset, simulate_event_time, simulate_event_time_numeric, train_test_split,
    FeatureSampler, ScenarioId, SimulationConfig, BETA_1, BETA_2, BETA_3, T_MAX,
};
use crate::survmodel::{fit_coxph, GroundTruthModel};

/// The observation explained in the reference table of time-wise means.
pub const REFERENCE_INSTANCE: [f64; 3] = [-1.2650, 2.4162, -0.6436];
/// Reference time-wise means of the main effects for [`REFERENCE_INSTANCE`].
pub const REFERENCE_MAIN_MEANS: [f64; 3] = [-0.5167, -1.9000, 0.3750];
pub const REFERENCE_CINDEX: f64 = 0.759;
pub const REFERENCE_IBS: f64 = 0.143;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    LocalAccuracy,
    Means,
    Thm1,
    Thm2,
    Cor1,
    Thm5,
    Identities,
    Cox,
    Simulation,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::LocalAccuracy,
        Suite::Means,
        Suite::Thm1,
        Suite::Thm2,
        Suite::Cor1,
        Suite::Thm5,
        Suite::Identities,
        Suite::Cox,
        Suite::Simulation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::LocalAccuracy => "local-accuracy",
            Suite::Means => "means",
            Suite::Thm1 => "thm1",
            Suite::Thm2 => "thm2",
            Suite::Cor1 => "cor1",
            Suite::Thm5 => "thm5",
            Suite::Identities => "identities",
            Suite::Cox => "cox",
            Suite::Simulation => "simulation",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.as_str()).collect();
                Error::Parse(format!("unknown suite {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn below(suite: Suite, name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check::new(suite, name.into(), measured, Relation::Below, threshold)
    }

    pub fn above(suite: Suite, name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check::new(suite, name.into(), measured, Relation::Above, threshold)
    }

    fn new(suite: Suite, name: String, measured: f64, relation: Relation, threshold: f64) -> Self {
        let passed = match relation {
            Relation::Below => measured < threshold,
            Relation::Above => measured > threshold,
        };
        Check {
            suite,
            name,
            measured,
            relation,
            threshold,
            passed,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.relation {
            Relation::Below => "<",
            Relation::Above => ">",
        };
        write!(
            f,
            "[{}] {}/{}: {:.6e} {rel} {:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.threshold
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Averaged local accuracy of one scenario and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub scenario: ScenarioId,
    pub target: PredictionTarget,
    pub k: usize,
    pub sigma_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub seed: u64,
    /// Simulated sample size; also the instance set and background size.
    pub n: usize,
    pub n_times: usize,
    /// Multiplies every tolerance threshold.
    pub tolerance_scale: f64,
    pub cox_seeds: usize,
    pub survival_draws: usize,
    /// Draws of the conditional-Gaussian imputer.
    pub conditional_samples: usize,
    /// Independent conditional-imputer seeds used for the Monte-Carlo SE.
    pub conditional_replicates: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seed: 2024,
            n: 1000,
            n_times: 41,
            tolerance_scale: 1.0,
            cox_seeds: 20,
            survival_draws: 100_000,
            conditional_samples: 1000,
            conditional_replicates: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub sigma: Vec<SigmaRow>,
    /// Largest efficiency residual over every exact explanation computed.
    pub max_efficiency_residual: f64,
    /// Largest efficiency residual relative to `max(1, max|phi|)`.
    pub max_relative_efficiency_residual: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `suite,check,measured,relation,threshold,passed,detail`
    pub fn write_checks_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["suite", "check", "measured", "relation", "threshold", "passed", "detail"])?;
        for c in &self.checks {
            w.write_record([
                c.suite.to_string(),
                c.name.clone(),
                format!("{:e}", c.measured),
                match c.relation {
                    Relation::Below => "<".to_string(),
                    Relation::Above => ">".to_string(),
                },
                format!("{:e}", c.threshold),
                c.passed.to_string(),
                c.detail.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("checks csv", e))?;
        Ok(())
    }

    /// `scenario,target,k,sigma_bar`
    pub fn write_sigma_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "target", "k", "sigma_bar"])?;
        for r in &self.sigma {
            w.write_record([
                r.scenario.to_string(),
                r.target.to_string(),
                r.k.to_string(),
                format!("{:e}", r.sigma_bar),
            ])?;
        }
        w.flush().map_err(|e| Error::io("sigma csv", e))?;
        Ok(())
    }
}

/// Runs the given suites in order. The identity suite also checks the
/// efficiency residual of every exact explanation computed before it.
pub fn run_validation(suites: &[Suite], config: &ValidationConfig) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut residuals = Vec::new();
    for &suite in suites {
        let out = run_suite_with(suite, config, &residuals)?;
        residuals.extend(out.residuals);
        report.checks.extend(out.checks);
        report.sigma.extend(out.sigma);
    }
    report.max_efficiency_residual = residuals.iter().map(|r| r.absolute).fold(0.0, f64::max);
    report.max_relative_efficiency_residual = residuals.iter().map(|r| r.relative()).fold(0.0, f64::max);
    Ok(report)
}

/// Runs one suite on its own.
pub fn run_suite(suite: Suite, config: &ValidationConfig) -> Result<ValidationReport> {
    run_validation(&[suite], config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Residual {
    absolute: f64,
    scale: f64,
}

impl Residual {
    fn of(run: &ExactRun) -> Self {
        Residual {
            absolute: run.efficiency_residual,
            scale: run.attribution_scale,
        }
    }

    fn relative(self) -> f64 {
        self.absolute / self.scale.max(1.0)
    }
}

#[derive(Default)]
struct SuiteOutput {
    checks: Vec<Check>,
    sigma: Vec<SigmaRow>,
    residuals: Vec<Residual>,
}

fn run_suite_with(suite: Suite, cfg: &ValidationConfig, earlier: &[Residual]) -> Result<SuiteOutput> {
    match suite {
        Suite::LocalAccuracy => local_accuracy_suite(cfg),
        Suite::Means => means_suite(cfg),
        Suite::Thm1 => thm1_suite(cfg),
        Suite::Thm2 => thm2_suite(cfg),
        Suite::Cor1 => cor1_suite(cfg),
        Suite::Thm5 => thm5_suite(cfg),
        Suite::Identities => identities_suite(cfg, earlier),
        Suite::Cox => cox_suite(cfg),
        Suite::Simulation => simulation_suite(cfg),
    }
}

/// An exact explanation together with the prediction it decomposes.
pub struct ExactRun {
    pub explanation: InteractionExplanation,
    pub prediction: Vec<f64>,
    /// `max_t |Σφ(t) − (F(t|x) − baseline(t))|`.
    pub efficiency_residual: f64,
    /// `max |phi_S(t)|` over all coalitions and grid points.
    pub attribution_scale: f64,
}

/// Exact k-SII explanation of one instance.
pub fn exact_run(setup: &GameSetup, x: &[f64], k: usize) -> Result<ExactRun> {
    let game = setup.game(x)?;
    let table = evaluate_all_coalitions(&game, DEFAULT_MEMORY_BUDGET)?;
    let values = exact_ksii(&table, k)?;
    let explanation = InteractionExplanation::new(
        k,
        setup.predictor().target(),
        setup.grid().clone(),
        setup.baseline().to_vec(),
        values,
    )?;
    let prediction = game.prediction()?;
    let efficiency_residual = explanation
        .attribution_sum()
        .iter()
        .zip(&prediction)
        .zip(setup.baseline())
        .map(|((s, f), b)| (s - (f - b)).abs())
        .fold(0.0, f64::max);
    let attribution_scale = explanation
        .values()
        .values()
        .flat_map(|v| v.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    Ok(ExactRun {
        explanation,
        prediction,
        efficiency_residual,
        attribution_scale,
    })
}

pub fn even_grid(n_times: usize) -> Result<TimeGrid> {
    build_time_grid(T_MAX, n_times, GridMode::Even)
}

/// Ground-truth predictor with marginal imputation over `background`.
pub fn marginal_setup(
    model: &GroundTruthModel,
    target: PredictionTarget,
    grid: &TimeGrid,
    background: &SurvivalDataset,
) -> Result<GameSetup> {
    let pred = GroundTruthPredictor::new(model.clone(), target, grid.clone())?;
    GameSetup::new(Arc::new(pred), Arc::new(Imputer::marginal_from(background)?))
}

fn simulate(scenario: u8, cfg: &ValidationConfig) -> Result<crate::simulate::SimulatedData> {
    simulate_dataset(&SimulationConfig {
        n: cfg.n,
        ..SimulationConfig::new(ScenarioId::Numbered(scenario), cfg.seed)
    })
}

fn reference_run(scenario: u8, target: PredictionTarget, k: usize, cfg: &ValidationConfig) -> Result<ExactRun> {
    let sim = simulate(scenario, cfg)?;
    let setup = marginal_setup(&sim.model, target, &even_grid(cfg.n_times)?, &sim.dataset)?;
    exact_run(&setup, &REFERENCE_INSTANCE, k)
}

fn fmt_set(s: &BTreeSet<Coalition>) -> String {
    let v: Vec<String> = s.iter().map(|c| format!("{{{c}}}")).collect();
    format!("[{}]", v.join(" "))
}

fn local_accuracy_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let grid = even_grid(cfg.n_times)?;
    for scenario in 1..=10u8 {
        let sim = simulate(scenario, cfg)?;
        for target in PredictionTarget::ALL {
            let setup = marginal_setup(&sim.model, target, &grid, &sim.dataset)?;
            let runs: Vec<ExactRun> = (0..sim.dataset.n())
                .into_par_iter()
                .map(|i| exact_run(&setup, sim.dataset.row(i), 2))
                .collect::<Result<_>>()?;
            let (expls, preds): (Vec<_>, Vec<_>) = runs
                .into_iter()
                .map(|r| {
                    out.residuals.push(Residual::of(&r));
                    (r.explanation, r.prediction)
                })
                .unzip();
            let la = local_accuracy(&expls, &preds, setup.baseline())?;
            let threshold = match target {
                PredictionTarget::Survival => 5e-3,
                _ => 1e-5,
            } * cfg.tolerance_scale;
            out.checks.push(Check::below(
                Suite::LocalAccuracy,
                format!("scenario{scenario}/{target}"),
                la.mean,
                threshold,
            ));
            out.sigma.push(SigmaRow {
                scenario: ScenarioId::Numbered(scenario),
                target,
                k: 2,
                sigma_bar: la.mean,
            });
        }
    }
    Ok(out)
}

fn means_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let sim = simulate(1, cfg)?;
    let setup = marginal_setup(&sim.model, PredictionTarget::LogHazard, &even_grid(cfg.n_times)?, &sim.dataset)?;
    let run = exact_run(&setup, &REFERENCE_INSTANCE, 2)?;
    out.residuals.push(Residual::of(&run));
    let summary = timewise_summary(&run.explanation);
    let betas = [BETA_1, BETA_2, BETA_3];
    let mut analytic_gap: f64 = 0.0;
    for j in 0..3 {
        let m = summary[&Coalition::singleton(j)].mean;
        out.checks.push(
            Check::below(Suite::Means, format!("x{}", j + 1), (m - REFERENCE_MAIN_MEANS[j]).abs(), 0.1)
                .with_detail(format!("mean {m:.4}, reference {:.4}", REFERENCE_MAIN_MEANS[j])),
        );
        let xbar = sim.dataset.column(j).iter().sum::<f64>() / sim.dataset.n() as f64;
        analytic_gap = analytic_gap.max((m - betas[j] * (REFERENCE_INSTANCE[j] - xbar)).abs());
    }
    let pair_max = summary
        .iter()
        .filter(|(c, _)| c.len() == 2)
        .map(|(_, s)| s.mean.abs())
        .fold(0.0, f64::max);
    out.checks.push(Check::below(Suite::Means, "pairwise", pair_max, 0.05));
    out.checks.push(
        Check::below(Suite::Means, "linear-main-effects", analytic_gap, 1e-9 * cfg.tolerance_scale)
            .with_detail("main-effect mean vs beta_j (x_j - mean x_j)"),
    );
    Ok(out)
}

fn thm1_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let tol = 1e-6 * cfg.tolerance_scale;
    for scenario in [1u8, 2, 6, 7] {
        let run = reference_run(scenario, PredictionTarget::LogHazard, 3, cfg)?;
        out.residuals.push(Residual::of(&run));
        let expected: BTreeSet<Coalition> = build_scenario(ScenarioId::Numbered(scenario))?
            .time_dependent_subsets()
            .into_iter()
            .collect();
        let got = classify_time_dependence(&run.explanation, tol).dependent;
        let mismatches = got.symmetric_difference(&expected).count();
        out.checks.push(
            Check::below(Suite::Thm1, format!("scenario{scenario}"), mismatches as f64, 0.5)
                .with_detail(format!("time-dependent {} expected {}", fmt_set(&got), fmt_set(&expected))),
        );
    }
    Ok(out)
}

fn thm2_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let tol = 1e-6 * cfg.tolerance_scale;
    let run = reference_run(10, PredictionTarget::LogHazard, 3, cfg)?;
    out.residuals.push(Residual::of(&run));
    let var = |c: u64| time_variation(run.explanation.curve(Coalition::from_bits(c)).unwrap_or(&[]));
    out.checks.push(
        Check::above(Suite::Thm2, "scenario10/downward-{1}", var(0b001), tol)
            .with_detail("main effect of x1 picks up the time-dependent x1 x3 term"),
    );
    out.checks.push(
        Check::below(Suite::Thm2, "scenario10/no-upward-{1,2,3}", var(0b111), tol)
            .with_detail("three-way component stays time-constant"),
    );
    let run = reference_run(5, PredictionTarget::LogHazard, 3, cfg)?;
    out.residuals.push(Residual::of(&run));
    let var = |c: u64| time_variation(run.explanation.curve(Coalition::from_bits(c)).unwrap_or(&[]));
    out.checks.push(Check::above(
        Suite::Thm2,
        "scenario5/downward-{1}-or-{3}",
        var(0b001).max(var(0b100)),
        tol,
    ));
    Ok(out)
}

fn cor1_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let tol = 1e-6 * cfg.tolerance_scale;
    for target in [PredictionTarget::Hazard, PredictionTarget::Survival] {
        let run = reference_run(1, target, 2, cfg)?;
        out.residuals.push(Residual::of(&run));
        let scale = run.prediction.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let floor = run.efficiency_residual.max(8.0 * f64::EPSILON * scale);
        let pair_max = run
            .explanation
            .values()
            .iter()
            .filter(|(c, _)| c.len() == 2)
            .map(|(_, v)| v.iter().map(|x| x.abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        out.checks.push(
            Check::above(Suite::Cor1, format!("scenario1/{target}/interaction"), pair_max / floor, 10.0)
                .with_detail(format!("max pairwise |phi| {pair_max:.3e}, noise floor {floor:.3e}")),
        );
    }
    for (scenario, target) in [(4u8, PredictionTarget::Hazard), (8, PredictionTarget::Survival)] {
        let run = reference_run(scenario, target, 2, cfg)?;
        out.residuals.push(Residual::of(&run));
        let td: BTreeSet<Coalition> = build_scenario(ScenarioId::Numbered(scenario))?
            .time_dependent_subsets()
            .into_iter()
            .collect();
        let (worst, c) = run
            .explanation
            .values()
            .iter()
            .filter(|(c, _)| !td.contains(c))
            .map(|(c, v)| (time_variation(v), *c))
            .fold((0.0, Coalition::EMPTY), |a, b| if b.0 > a.0 { b } else { a });
        out.checks.push(
            Check::above(Suite::Cor1, format!("scenario{scenario}/{target}/propagation"), worst, tol)
                .with_detail(format!("largest variation on time-independent {{{c}}}")),
        );
    }
    Ok(out)
}

fn thm5_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let model = build_scenario(ScenarioId::DepDemo)?;
    let sampler = FeatureSampler::dep_demo(crate::simulate::DEP_DEMO_RHO, cfg.seed)?;
    let grid = even_grid(cfg.n_times)?;
    let x = [1.0, -0.5, 1.5];
    let x3 = Coalition::singleton(2);
    let pred: Arc<GroundTruthPredictor> =
        Arc::new(GroundTruthPredictor::new(model, PredictionTarget::LogHazard, grid.clone())?);

    let marginal = GameSetup::new(pred.clone(), Arc::new(Imputer::marginal(3, sampler.sample(cfg.n))?))?;
    let run = exact_run(&marginal, &x, 2)?;
    out.residuals.push(Residual::of(&run));
    let with_x3 = run
        .explanation
        .values()
        .iter()
        .filter(|(c, _)| c.contains(2))
        .map(|(_, v)| v.iter().map(|x| x.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    out.checks.push(
        Check::below(Suite::Thm5, "marginal-x3-zero", with_x3, 1e-10 * cfg.tolerance_scale)
            .with_detail("max |phi| over coalitions containing x3"),
    );

    let reps = cfg.conditional_replicates.max(2);
    let curves: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = stream(cfg.seed, "thm5-replicate", r as u64).random();
            let imp = Imputer::conditional_gaussian(
                sampler.mean().to_vec(),
                sampler.covariance().clone(),
                cfg.conditional_samples,
                seed,
            )?;
            let setup = GameSetup::new(pred.clone(), Arc::new(imp))?;
            let run = exact_run(&setup, &x, 2)?;
            Ok(run.explanation.curve(x3).map(<[f64]>::to_vec).unwrap_or_default())
        })
        .collect::<Result<_>>()?;
    let n_t = grid.len();
    let mean: Vec<f64> = (0..n_t).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / reps as f64).collect();
    let se: Vec<f64> = (0..n_t)
        .map(|t| (curves.iter().map(|c| (c[t] - mean[t]).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt())
        .collect();
    let t_star = (0..n_t).max_by(|&a, &b| mean[a].abs().total_cmp(&mean[b].abs())).unwrap_or(0);
    let floor = |s: f64| s.max(f64::EPSILON);
    let level = mean[t_star].abs() / floor(se[t_star]);
    let variation = time_variation(&mean) / floor(se.iter().copied().fold(0.0, f64::max));
    out.checks.push(
        Check::above(Suite::Thm5, "conditional-x3-nonzero", level.min(variation), 3.0).with_detail(format!(
            "max |phi| {:.4} = {level:.1} SE, time variation = {variation:.1} SE, {reps} replicates",
            mean[t_star].abs()
        )),
    );
    Ok(out)
}

fn random_table(p: usize, n_t: usize, seed: u64, i: u64) -> Result<crate::game::ValueTable> {
    let mut rng = stream(seed, "identities", i);
    crate::game::ValueTable::from_fn(p, n_t, |c| {
        if c.is_empty() {
            vec![0.0; n_t]
        } else {
            (0..n_t).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    })
}

/// Shapley values at timepoint `ti` by enumerating all permutations.
pub fn permutation_shapley(table: &crate::game::ValueTable, ti: usize) -> Vec<f64> {
    fn rec(
        table: &crate::game::ValueTable,
        ti: usize,
        prefix: Coalition,
        remaining: &mut Vec<usize>,
        acc: &mut [f64],
        count: &mut usize,
    ) {
        if remaining.is_empty() {
            *count += 1;
            return;
        }
        for i in 0..remaining.len() {
            let j = remaining.remove(i);
            let before = *count;
            rec(table, ti, prefix.insert(j), remaining, acc, count);
            let times = (*count - before) as f64;
            acc[j] += times * (table.get(prefix.insert(j), ti) - table.get(prefix, ti));
            remaining.insert(i, j);
        }
    }
    let p = table.p();
    let mut acc = vec![0.0; p];
    let mut count = 0;
    rec(table, ti, Coalition::EMPTY, &mut (0..p).collect(), &mut acc, &mut count);
    acc.iter().map(|v| v / count as f64).collect()
}

fn identities_suite(cfg: &ValidationConfig, earlier: &[Residual]) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let scale = cfg.tolerance_scale;
    let n_t = 3;
    let (mut moebius_gap, mut recon_gap, mut shapley_gap, mut eff): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..50u64 {
        let p = 1 + (i as usize % 6);
        let table = random_table(p, n_t, cfg.seed, i)?;
        let m = moebius_transform(&table);
        let full = exact_ksii(&table, p)?;
        for (c, v) in &full {
            for (a, b) in v.iter().zip(m.curve(*c)) {
                moebius_gap = moebius_gap.max((a - b).abs());
            }
        }
        for bits in 0..1u64 << p {
            let c = Coalition::from_bits(bits);
            for (a, b) in m.reconstruct(c).iter().zip(table.curve(c)) {
                recon_gap = recon_gap.max((a - b).abs());
            }
        }
        for k in 1..=p {
            let phi = exact_ksii(&table, k)?;
            for ti in 0..n_t {
                let total: f64 = phi.values().map(|v| v[ti]).sum();
                eff = eff.max((total - table.get(Coalition::full(p), ti)).abs());
            }
        }
        if p <= 4 {
            let phi = exact_ksii(&table, 1)?;
            for ti in 0..n_t {
                let oracle = permutation_shapley(&table, ti);
                for (j, o) in oracle.iter().enumerate() {
                    shapley_gap = shapley_gap.max((phi[&Coalition::singleton(j)][ti] - o).abs());
                }
            }
        }
    }
    out.checks.push(Check::below(Suite::Identities, "full-order-equals-moebius", moebius_gap, 1e-12 * scale));
    out.checks.push(Check::below(Suite::Identities, "order-one-equals-permutation-shapley", shapley_gap, 1e-10 * scale));
    out.checks.push(Check::below(Suite::Identities, "moebius-reconstruction", recon_gap, 1e-10 * scale));
    let all = earlier.iter().map(|r| r.absolute).fold(eff, f64::max);
    let relative = earlier.iter().map(|r| r.relative()).fold(eff, f64::max);
    out.checks.push(
        Check::below(Suite::Identities, "efficiency", all, 1e-9 * scale)
            .with_detail(format!("{} exact explanations plus random games", earlier.len())),
    );
    out.checks.push(
        Check::below(Suite::Identities, "efficiency-relative", relative, 1e-12 * scale)
            .with_detail("residual over max(1, max |phi|)"),
    );
    Ok(out)
}

/// Test-split metrics of one Cox fit on scenario 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxReplicate {
    pub seed: u64,
    pub cindex: f64,
    pub ibs: f64,
    pub beta_within_3se: bool,
}

pub fn cox_replicate(seed: u64, n: usize) -> Result<CoxReplicate> {
    let sim = simulate_dataset(&SimulationConfig {
        n,
        ..SimulationConfig::new(ScenarioId::Numbered(1), seed)
    })?;
    let n_train = n * 4 / 5;
    let (train, test) = train_test_split(&sim.dataset, n_train, seed)?;
    let model = fit_coxph(&train)?;
    let risk: Vec<f64> = test.rows().map(|r| model.linear_predictor(r)).collect::<Result<_>>()?;
    let cindex = concordance_index(&risk, &test)?;
    let max_time = test.times().iter().copied().fold(0.0, f64::max);
    let grid = build_time_grid(0.999 * max_time, 41, GridMode::Even)?;
    let surv: Vec<Vec<f64>> = test
        .rows()
        .map(|r| grid.points().iter().map(|&t| model.survival(r, t)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let ibs = integrated_brier(&surv, &test, &grid)?;
    let beta_within_3se = model
        .beta()
        .iter()
        .zip(model.std_errors())
        .zip([BETA_1, BETA_2, BETA_3])
        .all(|((b, se), truth)| (b - truth).abs() <= 3.0 * se);
    Ok(CoxReplicate {
        seed,
        cindex,
        ibs,
        beta_within_3se,
    })
}

fn cox_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let reps: Vec<CoxReplicate> = (0..cfg.cox_seeds as u64)
        .into_par_iter()
        .map(|s| cox_replicate(cfg.seed.wrapping_add(s), cfg.n))
        .collect::<Result<_>>()?;
    let n = reps.len().max(1) as f64;
    let c = reps.iter().map(|r| r.cindex).sum::<f64>() / n;
    let ibs = reps.iter().map(|r| r.ibs).sum::<f64>() / n;
    let covered = reps.iter().filter(|r| r.beta_within_3se).count();
    out.checks.push(
        Check::below(Suite::Cox, "cindex", (c - REFERENCE_CINDEX).abs(), 0.05)
            .with_detail(format!("mean {c:.4}, reference {REFERENCE_CINDEX}")),
    );
    out.checks.push(
        Check::below(Suite::Cox, "ibs", (ibs - REFERENCE_IBS).abs(), 0.05)
            .with_detail(format!("mean {ibs:.4}, reference {REFERENCE_IBS}")),
    );
    let needed = (cfg.cox_seeds as f64 * 0.9).ceil();
    out.checks.push(
        Check::above(Suite::Cox, "beta-within-3se", covered as f64, needed - 0.5)
            .with_detail(format!("{covered} of {} seeds", cfg.cox_seeds)),
    );
    Ok(out)
}

fn simulation_suite(cfg: &ValidationConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for scenario in [1u8, 3, 6, 8] {
        let model = build_scenario(ScenarioId::Numbered(scenario))?;
        let sampler = FeatureSampler::equicorrelated(3, 0.0, cfg.seed)?;
        let gaps: Vec<f64> = (0..1000u64)
            .into_par_iter()
            .map(|i| {
                let x = sampler.sample_row(i);
                let u: f64 = stream(cfg.seed, "root-check", i).random_range(1e-12..1.0);
                let a = simulate_event_time(&model, &x, u)?;
                let b = simulate_event_time_numeric(&model, &x, u)?;
                Ok(if a.is_infinite() && b.is_infinite() {
                    0.0
                } else {
                    (a - b).abs() / a.abs().max(1.0)
                })
            })
            .collect::<Result<_>>()?;
        let worst = gaps.into_iter().fold(0.0, f64::max);
        out.checks.push(
            Check::below(Suite::Simulation, format!("scenario{scenario}/root-finder"), worst, 1e-6 * cfg.tolerance_scale)
                .with_detail("closed form vs numeric inversion, 1000 draws, relative"),
        );
    }
    let n = cfg.survival_draws;
    for scenario in [1u8, 2] {
        let model = build_scenario(ScenarioId::Numbered(scenario))?;
        let times: Vec<f64> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let u: f64 = stream(cfg.seed, "survival-check", i).random_range(f64::MIN_POSITIVE..1.0);
                simulate_event_time(&model, &REFERENCE_INSTANCE, u)
            })
            .collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for t in [10.0, 30.0, 50.0] {
            let emp = times.iter().filter(|&&s| s > t).count() as f64 / n as f64;
            let s = model.eval_target(PredictionTarget::Survival, &REFERENCE_INSTANCE, t)?;
            let se = (s * (1.0 - s) / n as f64).sqrt();
            worst = worst.max((emp - s).abs() / se);
        }
        out.checks.push(
            Check::below(Suite::Simulation, format!("scenario{scenario}/empirical-survival"), worst, 3.0)
                .with_detail(format!("max |empirical - analytic| in binomial SE at t = 10, 30, 50; {n} draws")),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ValidationConfig {
        ValidationConfig {
            n: 200,
            n_times: 11,
            cox_seeds: 3,
            survival_draws: 20_000,
            conditional_samples: 300,
            conditional_replicates: 4,
            ..ValidationConfig::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("thm9".parse::<Suite>().is_err());
    }

    #[test]
    fn check_relations_are_strict() {
        assert!(!Check::below(Suite::Thm1, "x", 1.0, 1.0).passed);
        assert!(Check::below(Suite::Thm1, "x", 0.5, 1.0).passed);
        assert!(!Check::above(Suite::Thm1, "x", f64::NAN, 1.0).passed);
        assert!(Check::above(Suite::Thm1, "x", 2.0, 1.0).to_string().starts_with("[PASS]"));
    }

    #[test]
    fn thm5_has_two_checks() {
        let r = run_suite(Suite::Thm5, &small()).unwrap();
        assert_eq!(r.checks.len(), 2);
        assert!(r.all_passed(), "{:?}", r.checks);
    }

    #[test]
    fn zero_tolerance_fails_in_a_controlled_way() {
        let cfg = ValidationConfig {
            tolerance_scale: 0.0,
            ..small()
        };
        let r = run_validation(&[Suite::Thm5, Suite::Identities], &cfg).unwrap();
        assert!(!r.all_passed());
        assert!(r.failures().all(|c| c.measured.is_finite()));
    }

    #[test]
    fn decomposition_suites_pass_on_small_config() {
        let r = run_validation(&[Suite::Thm1, Suite::Thm2, Suite::Cor1, Suite::Means, Suite::Identities], &small()).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{c}");
        }
        assert!(r.max_efficiency_residual < 1e-9);
    }

    #[test]
    fn permutation_shapley_two_players() {
        let t = crate::game::ValueTable::from_fn(2, 1, |c| vec![[0.0, 1.0, 2.0, 4.0][c.bits() as usize]]).unwrap();
        assert_eq!(permutation_shapley(&t, 0), vec![1.5, 2.5]);
    }

    #[test]
    fn reports_write_csv() {
        let mut r = ValidationReport::default();
        r.checks.push(Check::below(Suite::Cox, "ibs", 0.01, 0.05));
        r.sigma.push(SigmaRow {
            scenario: ScenarioId::Numbered(3),
            target: PredictionTarget::Hazard,
            k: 2,
            sigma_bar: 1e-17,
        });
        let mut a = Vec::new();
        r.write_checks_csv(&mut a).unwrap();
        assert!(String::from_utf8(a).unwrap().starts_with("suite,check,measured"));
        let mut b = Vec::new();
        r.write_sigma_csv(&mut b).unwrap();
        assert_eq!(String::from_utf8(b).unwrap().lines().nth(1).unwrap(), "3,hazard,2,1e-17");
    }
}
