//! Term-based risk scores `G(t|x) = Σ β_M · Π_{j∈M} g_j(x_j) · l(t)`.

use std::f64::consts::FRAC_2_PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coalition::Coalition;
use crate::error::{Error, Result};

/// Feature transform `g_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Square,
    /// `(2/π)·arctan(a·x)`
    ScaledArctan(f64),
}

impl Transform {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Square => x * x,
            Transform::ScaledArctan(a) => FRAC_2_PI * (a * x).atan(),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => f.write_str("identity"),
            Transform::Square => f.write_str("square"),
            Transform::ScaledArctan(a) => write!(f, "scaled_arctan({a})"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" => return Ok(Transform::Identity),
            "square" => return Ok(Transform::Square),
            _ => {}
        }
        let arg = s
            .strip_prefix("scaled_arctan(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("unknown transform {s:?}")))?;
        let a: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad arctan scale in {s:?}")))?;
        Ok(Transform::ScaledArctan(a))
    }
}

impl Serialize for Transform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Time modifier `l(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeModifier {
    Constant,
    /// `log(t + 1)`
    Log1p,
}

impl TimeModifier {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            TimeModifier::Constant => 1.0,
            TimeModifier::Log1p => t.ln_1p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTerm {
    subset: Coalition,
    coefficient: f64,
    transforms: Vec<Transform>,
    time: TimeModifier,
}

impl RiskTerm {
    /// `transforms` align with the subset's members in ascending order.
    pub fn new(
        subset: Coalition,
        coefficient: f64,
        transforms: Vec<Transform>,
        time: TimeModifier,
    ) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::invalid("risk term needs at least one feature"));
        }
        if transforms.len() != subset.len() {
            return Err(Error::invalid(format!(
                "term {{{subset}}} has {} members but {} transforms",
                subset.len(),
                transforms.len()
            )));
        }
        if !coefficient.is_finite() {
            return Err(Error::NonFinite {
                what: "risk coefficient",
                value: coefficient,
            });
        }
        Ok(RiskTerm {
            subset,
            coefficient,
            transforms,
            time,
        })
    }

    /// Shorthand for a term with identity transforms on 0-based features.
    pub fn linear(features: &[usize], coefficient: f64, time: TimeModifier) -> Result<Self> {
        Self::new(
            Coalition::from_indices(features.iter().copied())?,
            coefficient,
            vec![Transform::Identity; features.len()],
            time,
        )
    }

    pub fn subset(&self) -> Coalition {
        self.subset
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn time(&self) -> TimeModifier {
        self.time
    }

    /// `β_M · Π g_j(x_j)` without the time factor.
    #[inline]
    pub fn feature_part(&self, x: &[f64]) -> f64 {
        self.subset
            .members()
            .zip(&self.transforms)
            .fold(self.coefficient, |acc, (j, g)| acc * g.apply(x[j]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskScoreSpec {
    p: usize,
    terms: Vec<RiskTerm>,
}

impl RiskScoreSpec {
    pub fn new(p: usize, terms: Vec<RiskTerm>) -> Result<Self> {
        for t in &terms {
            if !t.subset.fits(p) {
                return Err(Error::invalid(format!(
                    "term {{{}}} uses features beyond p = {p}",
                    t.subset
                )));
            }
        }
        Ok(RiskScoreSpec { p, terms })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn terms(&self) -> &[RiskTerm] {
        &self.terms
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| t.time == TimeModifier::Constant)
    }

    /// Term subsets whose effect varies with time.
    pub fn time_dependent_subsets(&self) -> Vec<Coalition> {
        let mut out: Vec<Coalition> = self
            .terms
            .iter()
            .filter(|t| t.time != TimeModifier::Constant)
            .map(|t| t.subset)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Features that appear in at least one term.
    pub fn active_features(&self) -> Coalition {
        self.terms
            .iter()
            .fold(Coalition::EMPTY, |acc, t| acc.union(t.subset))
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `G(t|x)`.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_dim(x)?;
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("time must be >= 0, got {t}")));
        }
        let g: f64 = self
            .terms
            .iter()
            .map(|term| term.feature_part(x) * term.time.apply(t))
            .sum();
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "risk score",
                value: g,
            });
        }
        Ok(g)
    }

    /// Splits the score as `G(t|x) = a + b·log(1 + t)`, returning `(a, b)`.
    /// Every supported time modifier has this form.
    #[inline]
    pub fn split(&self, x: &[f64]) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for term in &self.terms {
            let v = term.feature_part(x);
            match term.time {
                TimeModifier::Constant => a += v,
                TimeModifier::Log1p => b += v,
            }
        }
        (a, b)
    }
}

/// Evaluates `G(t|x)`.
pub fn eval_risk_score(risk: &RiskScoreSpec, x: &[f64], t: f64) -> Result<f64> {
    risk.eval(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 3] = [-1.2650, 2.4162, -0.6436];

    fn scenario_one() -> RiskScoreSpec {
        RiskScoreSpec::new(
            3,
            vec![
                RiskTerm::linear(&[0], 0.4, TimeModifier::Constant).unwrap(),
                RiskTerm::linear(&[1], -0.8, TimeModifier::Constant).unwrap(),
                RiskTerm::linear(&[2], -0.6, TimeModifier::Constant).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_score_by_hand() {
        // 0.4·(−1.2650) − 0.8·2.4162 − 0.6·(−0.6436)
        let g = scenario_one().eval(&X, 12.0).unwrap();
        assert!((g - (-2.05280)).abs() < 1e-12, "{g}");
    }

    #[test]
    fn empty_terms_score_zero() {
        let r = RiskScoreSpec::new(2, vec![]).unwrap();
        assert_eq!(r.eval(&[1.0, 2.0], 3.0).unwrap(), 0.0);
    }

    #[test]
    fn log1p_term_vanishes_at_zero() {
        let r = RiskScoreSpec::new(
            3,
            vec![
                RiskTerm::linear(&[0], 0.4, TimeModifier::Log1p).unwrap(),
                RiskTerm::linear(&[1], -0.8, TimeModifier::Constant).unwrap(),
                RiskTerm::linear(&[2], -0.6, TimeModifier::Constant).unwrap(),
            ],
        )
        .unwrap();
        let g = r.eval(&X, 0.0).unwrap();
        assert!((g - (-1.54680)).abs() < 1e-12, "{g}");
        let (a, b) = r.split(&X);
        for t in [0.0, 1.0, 33.0] {
            assert!((a + b * f64::ln_1p(t) - r.eval(&X, t).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_checked() {
        assert!(scenario_one().eval(&[1.0], 1.0).is_err());
    }

    #[test]
    fn term_validation() {
        assert!(RiskTerm::new(Coalition::EMPTY, 1.0, vec![], TimeModifier::Constant).is_err());
        let c = Coalition::from_indices([0, 1]).unwrap();
        assert!(RiskTerm::new(c, 1.0, vec![Transform::Square], TimeModifier::Constant).is_err());
        let t = RiskTerm::linear(&[4], 1.0, TimeModifier::Constant).unwrap();
        assert!(RiskScoreSpec::new(3, vec![t]).is_err());
    }

    #[test]
    fn transforms() {
        assert_eq!(Transform::Square.apply(-3.0), 9.0);
        let v = Transform::ScaledArctan(0.7).apply(1e9);
        assert!((v - 1.0).abs() < 1e-8);
        for s in ["identity", "square", "scaled_arctan(0.7)"] {
            assert_eq!(s.parse::<Transform>().unwrap().to_string(), s);
        }
        assert!("cube".parse::<Transform>().is_err());
    }
}
