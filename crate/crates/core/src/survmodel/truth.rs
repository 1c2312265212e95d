use serde::{Deserialize, Serialize};

use super::quadrature::{gk15_apply, gk15_nodes, integrate, Tolerance};
use super::risk::{RiskScoreSpec, RiskTerm, TimeModifier, Transform};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::explanation::PredictionTarget;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineHazard {
    Constant { lambda: f64 },
}

/// Multiplicative hazard model `h(t|x) = h0(t)·exp(G(t|x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct GroundTruthModel {
    baseline: BaselineHazard,
    risk: RiskScoreSpec,
}

impl GroundTruthModel {
    pub fn new(lambda: f64, risk: RiskScoreSpec) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!("baseline hazard must be > 0, got {lambda}")));
        }
        Ok(GroundTruthModel {
            baseline: BaselineHazard::Constant { lambda },
            risk,
        })
    }

    pub fn baseline(&self) -> BaselineHazard {
        self.baseline
    }

    pub fn lambda(&self) -> f64 {
        match self.baseline {
            BaselineHazard::Constant { lambda } => lambda,
        }
    }

    pub fn risk(&self) -> &RiskScoreSpec {
        &self.risk
    }

    pub fn p(&self) -> usize {
        self.risk.p()
    }

    /// Cumulative hazard `∫_0^t h(u|x) du`.
    pub fn cumulative_hazard(&self, x: &[f64], t: f64) -> Result<f64> {
        self.risk.check_dim(x)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let lambda = self.lambda();
        if self.risk.is_time_independent() {
            let h = lambda * self.risk.eval(x, 0.0)?.exp();
            return finite("cumulative hazard", h * t);
        }
        let (a, b) = self.risk.split(x);
        let scale = lambda * a.exp();
        let j = unit_integral(b, 0.0, t)?;
        finite("cumulative hazard", scale * j)
    }

    /// Cumulative hazard by direct quadrature of `h(u|x)`, with no closed-form
    /// shortcuts. Used to cross-check the fast paths.
    pub fn cumulative_hazard_by_quadrature(&self, x: &[f64], t: f64) -> Result<f64> {
        self.risk.check_dim(x)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
        }
        let lambda = self.lambda();
        let mut bad = None;
        let (v, _) = integrate(
            |u| match self.risk.eval(x, u) {
                Ok(g) => lambda * g.exp(),
                Err(e) => {
                    bad.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            Tolerance::default(),
        )?;
        if let Some(e) = bad {
            return Err(e);
        }
        finite("cumulative hazard", v)
    }

    /// Cumulative hazard at each of the increasing times `ts`, integrating
    /// interval by interval.
    pub fn cumulative_hazard_curve(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        self.risk.check_dim(x)?;
        let (a, b) = self.risk.split(x);
        let scale = self.lambda() * a.exp();
        let j = unit_profile(b, ts)?;
        j.into_iter()
            .map(|v| finite("cumulative hazard", scale * v))
            .collect()
    }

    pub fn eval_target(&self, target: PredictionTarget, x: &[f64], t: f64) -> Result<f64> {
        match target {
            PredictionTarget::LogHazard => Ok(self.lambda().ln() + self.risk.eval(x, t)?),
            PredictionTarget::Hazard => {
                finite("hazard", self.lambda() * self.risk.eval(x, t)?.exp())
            }
            PredictionTarget::Survival => Ok((-self.cumulative_hazard(x, t)?).exp()),
        }
    }

    /// Subsets with a time-varying term, i.e. the ground-truth time-dependent
    /// effects of the log-hazard.
    pub fn time_dependent_subsets(&self) -> Vec<Coalition> {
        self.risk.time_dependent_subsets()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn finite(what: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what, value: v })
    }
}

/// `∫_lo^hi (1+u)^b du` by adaptive quadrature.
fn unit_integral(b: f64, lo: f64, hi: f64) -> Result<f64> {
    if b == 0.0 {
        return Ok(hi - lo);
    }
    integrate(|u| (1.0 + u).powf(b), lo, hi, Tolerance::default()).map(|r| r.0)
}

/// `J_b(t) = ∫_0^t (1+u)^b du` at each of the strictly increasing times `ts`.
/// Every supported risk score has `G = a + b·log(1+t)`, so the cumulative
/// hazard is `λ·e^a·J_b(t)`.
pub fn unit_profile(b: f64, ts: &[f64]) -> Result<Vec<f64>> {
    UnitProfile::new(ts)?.eval(b)
}

/// [`unit_profile`] for many exponents over one fixed set of times. The
/// `log(1+u)` values at the first-pass quadrature nodes are computed once;
/// intervals whose error estimate misses the tolerance fall back to adaptive
/// integration.
#[derive(Debug, Clone)]
pub struct UnitProfile {
    ts: Vec<f64>,
    log_nodes: Vec<[f64; 15]>,
}

impl UnitProfile {
    pub fn new(ts: &[f64]) -> Result<Self> {
        let mut prev = 0.0;
        let mut log_nodes = Vec::with_capacity(ts.len());
        for &t in ts {
            if !(t >= prev && t.is_finite()) {
                return Err(Error::invalid("times must be finite, non-negative and increasing"));
            }
            log_nodes.push(gk15_nodes(prev, t).map(f64::ln_1p));
            prev = t;
        }
        Ok(UnitProfile {
            ts: ts.to_vec(),
            log_nodes,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    pub fn eval(&self, b: f64) -> Result<Vec<f64>> {
        if b == 0.0 {
            return Ok(self.ts.clone());
        }
        let span = self.ts.last().copied().unwrap_or(0.0);
        let mut out = Vec::with_capacity(self.ts.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for (&t, logs) in self.ts.iter().zip(&self.log_nodes) {
            let width = t - prev;
            if width > 0.0 {
                let vals = logs.map(|l| (b * l).exp());
                let (v, err) = gk15_apply(&vals, 0.5 * width);
                let tol = Tolerance::default();
                let allowed = (tol.abs * width / span).max(tol.rel * v.abs());
                acc += if err <= allowed {
                    v
                } else {
                    let local = Tolerance {
                        abs: tol.abs * width / span,
                        rel: tol.rel,
                    };
                    integrate(|u| (1.0 + u).powf(b), prev, t, local)?.0
                };
            }
            out.push(acc);
            prev = t;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermSpec {
    features: Vec<usize>,
    beta: f64,
    transforms: Vec<Transform>,
    time: TimeModifier,
}

/// JSON form of a [`GroundTruthModel`]; feature indices are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    p: usize,
    lambda: f64,
    terms: Vec<TermSpec>,
}

impl TryFrom<ModelSpec> for GroundTruthModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        let mut terms = Vec::with_capacity(spec.terms.len());
        for t in spec.terms {
            if t.features.contains(&0) {
                return Err(Error::invalid("feature indices in model files are 1-based"));
            }
            let mut idx: Vec<(usize, Transform)> = t
                .features
                .iter()
                .map(|&f| f - 1)
                .zip(t.transforms.iter().copied())
                .collect();
            if t.features.len() != t.transforms.len() {
                return Err(Error::invalid(format!(
                    "term over features {:?} lists {} transforms",
                    t.features,
                    t.transforms.len()
                )));
            }
            idx.sort_by_key(|e| e.0);
            if idx.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!("repeated feature in term {:?}", t.features)));
            }
            let subset = Coalition::from_indices(idx.iter().map(|e| e.0))?;
            let transforms = idx.into_iter().map(|e| e.1).collect();
            terms.push(RiskTerm::new(subset, t.beta, transforms, t.time)?);
        }
        GroundTruthModel::new(spec.lambda, RiskScoreSpec::new(spec.p, terms)?)
    }
}

impl From<GroundTruthModel> for ModelSpec {
    fn from(m: GroundTruthModel) -> Self {
        ModelSpec {
            p: m.p(),
            lambda: m.lambda(),
            terms: m
                .risk
                .terms()
                .iter()
                .map(|t| TermSpec {
                    features: t.subset().members().map(|j| j + 1).collect(),
                    beta: t.coefficient(),
                    transforms: t.transforms().to_vec(),
                    time: t.time(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 3] = [-1.2650, 2.4162, -0.6436];

    fn model(time_x1: TimeModifier) -> GroundTruthModel {
        let risk = RiskScoreSpec::new(
            3,
            vec![
                RiskTerm::linear(&[0], 0.4, time_x1).unwrap(),
                RiskTerm::linear(&[1], -0.8, TimeModifier::Constant).unwrap(),
                RiskTerm::linear(&[2], -0.6, TimeModifier::Constant).unwrap(),
            ],
        )
        .unwrap();
        GroundTruthModel::new(0.03, risk).unwrap()
    }

    fn trapezoid(f: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
        h * (0.5 * f(0.0) + inner + 0.5 * f(t))
    }

    #[test]
    fn hazard_and_survival_by_hand() {
        let m = model(TimeModifier::Constant);
        let h = m.eval_target(PredictionTarget::Hazard, &X, 5.0).unwrap();
        assert!((h - 0.03 * (-2.0528f64).exp()).abs() < 1e-12);
        assert!((h - 0.003851).abs() < 5e-7);
        let s = m.eval_target(PredictionTarget::Survival, &X, 70.0).unwrap();
        assert!((s - (-h * 70.0).exp()).abs() < 1e-12);
        assert!((s - 0.7637).abs() < 1e-4);
        let s0 = m.eval_target(PredictionTarget::Survival, &X, 1e-12).unwrap();
        assert!((s0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hazard_is_exp_log_hazard() {
        let m = model(TimeModifier::Log1p);
        for t in [0.0, 0.5, 13.0, 70.0] {
            let lh = m.eval_target(PredictionTarget::LogHazard, &X, t).unwrap();
            let h = m.eval_target(PredictionTarget::Hazard, &X, t).unwrap();
            assert!((lh.exp() - h).abs() <= 1e-12 * h.max(1.0));
        }
    }

    #[test]
    fn time_dependent_hazard_matches_trapezoid_oracle() {
        let m = model(TimeModifier::Log1p);
        let h = m.cumulative_hazard(&X, 10.0).unwrap();
        let oracle = trapezoid(
            |u| m.eval_target(PredictionTarget::Hazard, &X, u).unwrap(),
            10.0,
            10_000,
        );
        assert!((h - oracle).abs() < 1e-8, "{h} vs {oracle}");
    }

    #[test]
    fn time_independent_closed_form_vs_quadrature() {
        let m = model(TimeModifier::Constant);
        let closed = m.cumulative_hazard(&X, 42.0).unwrap();
        let g = m.risk().eval(&X, 0.0).unwrap();
        let (q, _) = integrate(|_| 0.03 * g.exp(), 0.0, 42.0, Tolerance::default()).unwrap();
        assert!((closed - q).abs() < 1e-10);
        assert_eq!(m.cumulative_hazard(&X, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn curve_agrees_with_pointwise_and_closed_form() {
        let m = model(TimeModifier::Log1p);
        let ts = [1.0, 5.0, 17.5, 70.0];
        let curve = m.cumulative_hazard_curve(&X, &ts).unwrap();
        let (a, b) = m.risk().split(&X);
        for (i, &t) in ts.iter().enumerate() {
            let point = m.cumulative_hazard(&X, t).unwrap();
            let closed = 0.03 * a.exp() * ((1.0 + t).powf(b + 1.0) - 1.0) / (b + 1.0);
            assert!((curve[i] - point).abs() < 1e-10);
            assert!((curve[i] - closed).abs() < 1e-10);
        }
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn profile_matches_closed_form() {
        let ts: Vec<f64> = (1..=41).map(|i| i as f64 * 70.0 / 41.0).collect();
        let prof = UnitProfile::new(&ts).unwrap();
        for b in [-3.1, -1.0, -0.37, 0.0, 0.05, 0.9, 2.4] {
            let got = prof.eval(b).unwrap();
            for (t, v) in ts.iter().zip(&got) {
                let exact = if (b + 1.0).abs() < 1e-15 {
                    t.ln_1p()
                } else {
                    ((1.0 + t).powf(b + 1.0) - 1.0) / (b + 1.0)
                };
                assert!((v - exact).abs() <= 1e-10f64.max(1e-11 * exact), "b={b} t={t}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn survival_non_increasing() {
        let m = model(TimeModifier::Log1p);
        let mut prev = 1.0;
        for i in 1..=70 {
            let s = m.eval_target(PredictionTarget::Survival, &X, i as f64).unwrap();
            assert!(s <= prev && s > 0.0);
            prev = s;
        }
    }

    #[test]
    fn overflow_is_reported() {
        let risk = RiskScoreSpec::new(1, vec![RiskTerm::linear(&[0], 1.0, TimeModifier::Constant).unwrap()]).unwrap();
        let m = GroundTruthModel::new(0.03, risk).unwrap();
        let r = m.eval_target(PredictionTarget::Hazard, &[800.0], 1.0);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn json_round_trip_and_one_based_indices() {
        let m = model(TimeModifier::Log1p);
        let s = m.to_json().unwrap();
        assert!(s.contains("\"log1p\""));
        assert_eq!(GroundTruthModel::from_json(&s).unwrap(), m);
        let text = r#"{"p":2,"lambda":0.03,"terms":[{"features":[2,1],"beta":0.5,
            "transforms":["square","identity"],"time":"constant"}]}"#;
        let m2 = GroundTruthModel::from_json(text).unwrap();
        // x1 identity, x2 squared
        assert!((m2.risk().eval(&[2.0, 3.0], 0.0).unwrap() - 9.0).abs() < 1e-12);
        let bad = r#"{"p":2,"lambda":0.03,"terms":[{"features":[0],"beta":1,"transforms":["identity"],"time":"constant"}]}"#;
        assert!(GroundTruthModel::from_json(bad).is_err());
        assert!(GroundTruthModel::from_json(r#"{"p":1,"lambda":0,"terms":[]}"#).is_err());
    }
}
