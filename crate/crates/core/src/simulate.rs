//! Scenario catalog and survival data generation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::survmodel::{GroundTruthModel, RiskScoreSpec, RiskTerm, TimeModifier, Transform};

pub const LAMBDA: f64 = 0.03;
pub const BETA_1: f64 = 0.4;
pub const BETA_2: f64 = -0.8;
pub const BETA_3: f64 = -0.6;
pub const BETA_12: f64 = -0.5;
pub const BETA_13: f64 = 0.2;
pub const T_MAX: f64 = 70.0;
/// Correlation between x1 and x3 in the dependent-feature demo.
pub const DEP_DEMO_RHO: f64 = 0.9;

const ARCTAN_SCALE: f64 = 0.7;
const ROOT_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    /// Simulation scenarios 1 to 10.
    Numbered(u8),
    /// `G = 0.8·x1·log(t+1) − 0.4·x2` over three features, x3 unused but
    /// correlated with x1.
    DepDemo,
}

impl ScenarioId {
    pub fn all_numbered() -> impl Iterator<Item = ScenarioId> {
        (1..=10).map(ScenarioId::Numbered)
    }

    pub fn number(self) -> Option<u8> {
        match self {
            ScenarioId::Numbered(i) => Some(i),
            ScenarioId::DepDemo => None,
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioId::Numbered(i) => write!(f, "{i}"),
            ScenarioId::DepDemo => f.write_str("dep_demo"),
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "dep_demo" {
            return Ok(ScenarioId::DepDemo);
        }
        match s.parse::<u8>() {
            Ok(i) if (1..=10).contains(&i) => Ok(ScenarioId::Numbered(i)),
            _ => Err(Error::invalid(format!(
                "unknown scenario {s:?}; expected 1..10 or dep_demo"
            ))),
        }
    }
}

impl Serialize for ScenarioId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScenarioId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        let s = match Raw::deserialize(d)? {
            Raw::Int(i) => i.to_string(),
            Raw::Str(s) => s,
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn term(features: &[usize], beta: f64, transforms: &[Transform], time: TimeModifier) -> RiskTerm {
    RiskTerm::new(
        Coalition::from_indices(features.iter().copied()).expect("static feature index"),
        beta,
        transforms.to_vec(),
        time,
    )
    .expect("static risk term")
}

pub fn build_scenario(id: ScenarioId) -> Result<GroundTruthModel> {
    use TimeModifier::{Constant as C, Log1p as L};
    use Transform::{Identity as I, ScaledArctan, Square as Sq};
    let at = ScaledArctan(ARCTAN_SCALE);

    let n = match id {
        ScenarioId::DepDemo => {
            let risk = RiskScoreSpec::new(
                3,
                vec![term(&[0], 0.8, &[I], L), term(&[1], -0.4, &[I], C)],
            )?;
            return GroundTruthModel::new(LAMBDA, risk);
        }
        ScenarioId::Numbered(n) if (1..=10).contains(&n) => n,
        ScenarioId::Numbered(n) => {
            return Err(Error::invalid(format!("unknown scenario {n}")));
        }
    };

    let linear = n <= 5;
    // time modifier on the x1 main effect
    let x1_time = if matches!(n, 2 | 4 | 7 | 9) { L } else { C };
    let mut terms = if linear {
        vec![
            term(&[0], BETA_1, &[I], x1_time),
            term(&[1], BETA_2, &[I], C),
            term(&[2], BETA_3, &[I], C),
        ]
    } else {
        vec![
            term(&[0], BETA_1, &[Sq], x1_time),
            term(&[1], BETA_2, &[at], C),
            term(&[2], BETA_3, &[I], C),
        ]
    };
    match n {
        3 | 4 => terms.push(term(&[0, 2], BETA_13, &[I, I], C)),
        5 => terms.push(term(&[0, 2], BETA_13, &[I, I], L)),
        8 | 9 => {
            terms.push(term(&[0, 1], BETA_12, &[I, I], C));
            terms.push(term(&[0, 2], BETA_13, &[I, Sq], C));
        }
        10 => {
            terms.push(term(&[0, 1], BETA_12, &[I, I], C));
            terms.push(term(&[0, 2], BETA_13, &[I, Sq], L));
        }
        _ => {}
    }
    GroundTruthModel::new(LAMBDA, RiskScoreSpec::new(3, terms)?)
}

/// The same model over `p_total` features; the added features are inert.
pub fn with_inert_features(model: &GroundTruthModel, p_total: usize) -> Result<GroundTruthModel> {
    if p_total < model.p() {
        return Err(Error::invalid(format!(
            "cannot shrink a {}-feature model to {p_total}",
            model.p()
        )));
    }
    let risk = RiskScoreSpec::new(p_total, model.risk().terms().to_vec())?;
    GroundTruthModel::new(model.lambda(), risk)
}

/// Multivariate normal feature generator.
#[derive(Debug, Clone)]
pub struct FeatureSampler {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    seed: u64,
}

impl FeatureSampler {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, seed: u64) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: cov.nrows(),
            });
        }
        if (0..p).any(|i| (0..i).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12)) {
            return Err(Error::invalid("covariance must be symmetric"));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?
            .l();
        Ok(FeatureSampler {
            mean: DVector::from_vec(mean),
            cov,
            chol,
            seed,
        })
    }

    /// Zero mean, unit variances, pairwise correlation `rho`.
    pub fn equicorrelated(p: usize, rho: f64, seed: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("need at least one feature"));
        }
        let cov = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
        Self::new(vec![0.0; p], cov, seed)
    }

    /// Three standard normal features with `corr(x1, x3) = rho`.
    pub fn dep_demo(rho: f64, seed: u64) -> Result<Self> {
        let mut cov = DMatrix::identity(3, 3);
        cov[(0, 2)] = rho;
        cov[(2, 0)] = rho;
        Self::new(vec![0.0; 3], cov, seed)
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row `i` of the design, drawn from its own stream.
    pub fn sample_row(&self, i: u64) -> Vec<f64> {
        let mut rng = stream(self.seed, "features", i);
        let z = DVector::from_fn(self.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.chol * z).as_slice().to_vec()
    }

    /// `n × p` row-major sample.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * self.p());
        for i in 0..n {
            out.extend(self.sample_row(i as u64));
        }
        out
    }
}

pub fn sample_features(sampler: &FeatureSampler, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(sampler.sample(n))
}

/// Solves `H(T|x) = −log u`. Proportional-hazards models use the closed form,
/// others a bracketed root search. Returns `+∞` when the root lies beyond
/// `T = 1e6`.
pub fn simulate_event_time(model: &GroundTruthModel, x: &[f64], u: f64) -> Result<f64> {
    check_u(u)?;
    if model.risk().is_time_independent() {
        let rate = model.lambda() * model.risk().eval(x, 0.0)?.exp();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::NonFinite {
                what: "hazard rate",
                value: rate,
            });
        }
        return Ok(-u.ln() / rate);
    }
    solve_cumulative(|t| model.cumulative_hazard(x, t), -u.ln())
}

/// Root search on the directly integrated cumulative hazard, for any model.
pub fn simulate_event_time_numeric(model: &GroundTruthModel, x: &[f64], u: f64) -> Result<f64> {
    check_u(u)?;
    solve_cumulative(|t| model.cumulative_hazard_by_quadrature(x, t), -u.ln())
}

fn check_u(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("u must lie in (0, 1), got {u}")));
    }
    Ok(())
}

/// Finds `T` with `H(T) = target` for non-decreasing `H` with `H(0) = 0`.
fn solve_cumulative(mut h: impl FnMut(f64) -> Result<f64>, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut f_lo = -target;
    let mut f_hi = h(hi)? - target;
    while f_hi < 0.0 {
        if hi >= ROOT_LIMIT {
            return Ok(f64::INFINITY);
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = h(hi)? - target;
    }
    // Illinois variant of regula falsi
    let mut side = 0i8;
    for _ in 0..200 {
        if f_hi.abs() < 1e-13 * target.max(1.0) {
            return Ok(hi);
        }
        let mid = if f_hi != f_lo {
            (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
        let f_mid = h(mid)? - target;
        if f_mid == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(mid);
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if f_lo.abs() < 1e-13 * target.max(1.0) {
            return Ok(lo);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Administrative censoring: `y = min(t, t_max)`, `δ = 1[t < t_max]`.
pub fn apply_censoring(times: &[f64], t_max: f64) -> (Vec<f64>, Vec<bool>) {
    times
        .iter()
        .map(|&t| if t < t_max { (t, true) } else { (t_max, false) })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenario: ScenarioId,
    pub n: usize,
    pub seed: u64,
    /// Pairwise feature correlation; for `dep_demo`, the x1–x3 correlation.
    pub rho: f64,
    pub t_max: f64,
}

impl SimulationConfig {
    pub fn new(scenario: ScenarioId, seed: u64) -> Self {
        SimulationConfig {
            scenario,
            n: 1000,
            seed,
            rho: match scenario {
                ScenarioId::DepDemo => DEP_DEMO_RHO,
                ScenarioId::Numbered(_) => 0.0,
            },
            t_max: T_MAX,
        }
    }

    pub fn sampler(&self) -> Result<FeatureSampler> {
        match self.scenario {
            ScenarioId::DepDemo => FeatureSampler::dep_demo(self.rho, self.seed),
            ScenarioId::Numbered(_) => FeatureSampler::equicorrelated(3, self.rho, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub n: usize,
    pub rho: f64,
    pub t_max: f64,
    pub censoring_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub model: GroundTruthModel,
    pub dataset: SurvivalDataset,
    pub metadata: SimulationMetadata,
}

pub fn simulate_dataset(config: &SimulationConfig) -> Result<SimulatedData> {
    if config.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(config.t_max > 0.0) {
        return Err(Error::invalid("t_max must be positive"));
    }
    let model = build_scenario(config.scenario)?;
    let sampler = config.sampler()?;
    let features = sampler.sample(config.n);
    let p = sampler.p();
    let mut raw = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut rng = stream(config.seed, "event", i as u64);
        let u = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        raw.push(simulate_event_time(&model, &features[i * p..(i + 1) * p], u)?);
    }
    let (times, events) = apply_censoring(&raw, config.t_max);
    let censored = events.iter().filter(|e| !**e).count();
    let dataset = SurvivalDataset::from_flat(config.n, p, features, times, events)?;
    Ok(SimulatedData {
        model,
        dataset,
        metadata: SimulationMetadata {
            scenario: config.scenario,
            seed: config.seed,
            n: config.n,
            rho: config.rho,
            t_max: config.t_max,
            censoring_rate: censored as f64 / config.n as f64,
        },
    })
}

/// Random split into `n_train` training rows and the rest for testing.
pub fn train_test_split(
    data: &SurvivalDataset,
    n_train: usize,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    if n_train == 0 || n_train >= data.n() {
        return Err(Error::invalid(format!(
            "training size {n_train} must be between 1 and {}",
            data.n() - 1
        )));
    }
    let mut idx: Vec<usize> = (0..data.n()).collect();
    let mut rng = stream(seed, "split", 0);
    // Fisher–Yates
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let (train, test) = idx.split_at(n_train);
    Ok((data.subset(train)?, data.subset(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explanation::PredictionTarget;

    const X: [f64; 3] = [-1.2650, 2.4162, -0.6436];

    #[test]
    fn catalog_shapes() {
        let s1 = build_scenario(ScenarioId::Numbered(1)).unwrap();
        assert_eq!(s1.risk().terms().len(), 3);
        assert!(s1.risk().is_time_independent());
        let s10 = build_scenario(ScenarioId::Numbered(10)).unwrap();
        let last = s10.risk().terms().last().unwrap();
        assert_eq!(last.subset(), Coalition::from_indices([0, 2]).unwrap());
        assert_eq!(last.transforms(), &[Transform::Identity, Transform::Square]);
        assert_eq!(last.time(), TimeModifier::Log1p);
        assert_eq!(last.coefficient(), BETA_13);
        let dep = build_scenario(ScenarioId::DepDemo).unwrap();
        assert_eq!(dep.risk().terms().len(), 2);
        assert!(!dep.risk().active_features().contains(2));
        assert!(build_scenario(ScenarioId::Numbered(11)).is_err());
        assert!("11".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn time_dependent_parts_follow_the_table() {
        let td = |n| build_scenario(ScenarioId::Numbered(n)).unwrap().time_dependent_subsets();
        let x1 = Coalition::singleton(0);
        let x13 = Coalition::from_indices([0, 2]).unwrap();
        for n in [1, 3, 6, 8] {
            assert!(td(n).is_empty(), "scenario {n}");
        }
        for n in [2, 4, 7, 9] {
            assert_eq!(td(n), vec![x1], "scenario {n}");
        }
        assert_eq!(td(5), vec![x13]);
        assert_eq!(td(10), vec![x13]);
    }

    #[test]
    fn scenario_eight_by_hand() {
        let m = build_scenario(ScenarioId::Numbered(8)).unwrap();
        let [x1, x2, x3] = X;
        let expect = BETA_1 * x1 * x1
            + BETA_2 * std::f64::consts::FRAC_2_PI * (0.7 * x2).atan()
            + BETA_3 * x3
            + BETA_12 * x1 * x2
            + BETA_13 * x1 * x3 * x3;
        assert!((m.risk().eval(&X, 5.0).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn closed_form_event_time() {
        let m = build_scenario(ScenarioId::Numbered(1)).unwrap();
        let t = simulate_event_time(&m, &X, 0.5).unwrap();
        let rate = 0.03 * (-2.0528f64).exp();
        assert!((t - 2f64.ln() / rate).abs() < 1e-9);
        assert!((t - 180.0).abs() < 0.1);
        let tiny = simulate_event_time(&m, &X, 1.0 - 1e-12).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-6);
        assert!(simulate_event_time(&m, &X, 0.0).is_err());
        assert!(simulate_event_time(&m, &X, 1.0).is_err());
    }

    #[test]
    fn root_finder_agrees_with_closed_form() {
        for n in [1, 3, 6, 8] {
            let m = build_scenario(ScenarioId::Numbered(n)).unwrap();
            for u in [0.05, 0.3, 0.5, 0.77, 0.99] {
                let a = simulate_event_time(&m, &X, u).unwrap();
                let b = simulate_event_time_numeric(&m, &X, u).unwrap();
                assert!((a - b).abs() < 1e-6, "scenario {n} u={u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn time_dependent_root_solves_the_equation() {
        let m = build_scenario(ScenarioId::Numbered(10)).unwrap();
        let t = simulate_event_time(&m, &X, 0.4).unwrap();
        let h = m.cumulative_hazard(&X, t).unwrap();
        assert!((h + 0.4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn unreachable_root_is_infinite() {
        // decaying hazard whose total mass stays below −log u
        let risk = RiskScoreSpec::new(1, vec![RiskTerm::linear(&[0], -3.0, TimeModifier::Log1p).unwrap()]).unwrap();
        let m = GroundTruthModel::new(0.03, risk).unwrap();
        assert_eq!(simulate_event_time(&m, &[1.0], 0.01).unwrap(), f64::INFINITY);
    }

    #[test]
    fn censoring() {
        let (y, d) = apply_censoring(&[180.0, 12.3, f64::INFINITY, 70.0], 70.0);
        assert_eq!(y, vec![70.0, 12.3, 70.0, 70.0]);
        assert_eq!(d, vec![false, true, false, false]);
    }

    #[test]
    fn sampler_correlation_and_determinism() {
        let n = 100_000;
        for rho in [0.0, 0.9] {
            let s = FeatureSampler::equicorrelated(3, rho, 11).unwrap();
            let x = s.sample(n);
            let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in x.chunks(3) {
                s1 += r[0];
                s2 += r[1];
                s11 += r[0] * r[0];
                s22 += r[1] * r[1];
                s12 += r[0] * r[1];
            }
            let nf = n as f64;
            let cov = s12 / nf - s1 * s2 / nf / nf;
            let corr = cov / ((s11 / nf - (s1 / nf).powi(2)) * (s22 / nf - (s2 / nf).powi(2))).sqrt();
            assert!((corr - rho).abs() < 0.02, "rho={rho}: {corr}");
        }
        let s = FeatureSampler::equicorrelated(3, 0.5, 3).unwrap();
        assert_eq!(s.sample(50), s.sample(50));
        assert!(FeatureSampler::equicorrelated(3, 1.2, 3).is_err());
    }

    #[test]
    fn empirical_survival_matches_model() {
        let m = build_scenario(ScenarioId::Numbered(1)).unwrap();
        let n = 100_000;
        let times: Vec<f64> = (0..n)
            .map(|i| {
                let u: f64 = stream(5, "event", i).random();
                simulate_event_time(&m, &X, u.max(f64::MIN_POSITIVE)).unwrap()
            })
            .collect();
        for t in [10.0, 30.0, 50.0] {
            let emp = times.iter().filter(|&&s| s > t).count() as f64 / n as f64;
            let s = m.eval_target(PredictionTarget::Survival, &X, t).unwrap();
            let se = (s * (1.0 - s) / n as f64).sqrt();
            assert!((emp - s).abs() < 3.0 * se, "t={t}: {emp} vs {s}");
        }
    }

    #[test]
    fn dataset_simulation_is_reproducible() {
        let cfg = SimulationConfig {
            n: 200,
            ..SimulationConfig::new(ScenarioId::Numbered(2), 7)
        };
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.metadata, b.metadata);
        assert!(a.dataset.times().iter().all(|&t| t <= 70.0));
        let (train, test) = train_test_split(&a.dataset, 160, 7).unwrap();
        assert_eq!((train.n(), test.n()), (160, 40));
        let json = serde_json::to_string(&a.metadata).unwrap();
        assert!(json.contains("\"scenario\":\"2\""));
    }
}
