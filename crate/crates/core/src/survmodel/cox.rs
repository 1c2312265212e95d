use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const SEPARATION_LIMIT: f64 = 25.0;

/// Fitted Cox proportional-hazards model with a Breslow baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    beta: Vec<f64>,
    /// `(t, H0(t))` pairs, starting at `(0, 0)`, one step per distinct event time.
    baseline: Vec<[f64; 2]>,
    mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    std_errors: Vec<f64>,
}

impl CoxModel {
    pub fn new(beta: Vec<f64>, baseline: Vec<[f64; 2]>, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: beta.len(),
                got: mean.len(),
            });
        }
        if baseline.first().map(|b| *b != [0.0, 0.0]).unwrap_or(true) {
            return Err(Error::invalid("Breslow baseline must start at (0, 0)"));
        }
        if baseline.windows(2).any(|w| !(w[0][0] < w[1][0] && w[0][1] <= w[1][1])) {
            return Err(Error::invalid("Breslow baseline must be increasing in t and non-decreasing in H0"));
        }
        Ok(CoxModel {
            beta,
            baseline,
            mean,
            std_errors: Vec::new(),
        })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn baseline(&self) -> &[[f64; 2]] {
        &self.baseline
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard errors from the observed information; empty for models that
    /// were not fitted here.
    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Centered linear predictor `(x − mean)ᵀβ`.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.beta)
            .map(|((xi, m), b)| (xi - m) * b)
            .sum())
    }

    /// Right-continuous step interpolation of H0; constant after the last
    /// event time.
    pub fn baseline_cumhaz(&self, t: f64) -> f64 {
        let idx = self.baseline.partition_point(|b| b[0] <= t);
        if idx == 0 {
            0.0
        } else {
            self.baseline[idx - 1][1]
        }
    }

    pub fn survival(&self, x: &[f64], t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("time must be >= 0, got {t}")));
        }
        let eta = self.linear_predictor(x)?;
        Ok((-self.baseline_cumhaz(t) * eta.exp()).exp())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: CoxModel = serde_json::from_str(s)?;
        let se = raw.std_errors.clone();
        let mut m = CoxModel::new(raw.beta, raw.baseline, raw.mean)?;
        m.std_errors = se;
        Ok(m)
    }
}

pub fn coxph_survival(model: &CoxModel, x: &[f64], t: f64) -> Result<f64> {
    model.survival(x, t)
}

struct Fit {
    loglik: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

/// Rows sorted by decreasing time so risk sets are prefixes.
struct Prepared {
    x: Vec<Vec<f64>>,
    times: Vec<f64>,
    events: Vec<bool>,
}

impl Prepared {
    /// Breslow partial log-likelihood with gradient and observed information.
    fn evaluate(&self, beta: &DVector<f64>) -> Fit {
        let p = beta.len();
        let n = self.times.len();
        let mut loglik = 0.0;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut i = 0;
        while i < n {
            // add the whole tie block to the risk set first
            let t = self.times[i];
            let mut j = i;
            let mut d = 0usize;
            let mut xsum = DVector::<f64>::zeros(p);
            let mut eta_sum = 0.0;
            while j < n && self.times[j] == t {
                let xr = DVector::from_column_slice(&self.x[j]);
                let eta = beta.dot(&xr);
                let w = eta.exp();
                s0 += w;
                s1.axpy(w, &xr, 1.0);
                s2.ger(w, &xr, &xr, 1.0);
                if self.events[j] {
                    d += 1;
                    xsum += &xr;
                    eta_sum += eta;
                }
                j += 1;
            }
            if d > 0 {
                let df = d as f64;
                loglik += eta_sum - df * s0.ln();
                let xbar = &s1 / s0;
                grad += xsum - &xbar * df;
                info += (&s2 / s0 - &xbar * xbar.transpose()) * df;
            }
            i = j;
        }
        Fit { loglik, grad, info }
    }
}

/// Newton–Raphson fit of the Breslow partial likelihood on centered features.
pub fn fit_coxph(data: &SurvivalDataset) -> Result<CoxModel> {
    let n = data.n();
    let p = data.p();
    let mean: Vec<f64> = (0..p)
        .map(|j| data.rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let sd: Vec<f64> = (0..p)
        .map(|j| {
            let v = data.rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            v.sqrt()
        })
        .collect();
    if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::invalid(format!("feature x{} has zero variance", j + 1)));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // tied times are processed as one block below
    order.sort_by(|&a, &b| data.times()[b].total_cmp(&data.times()[a]));
    let prep = Prepared {
        x: order
            .iter()
            .map(|&i| data.row(i).iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect(),
        times: order.iter().map(|&i| data.times()[i]).collect(),
        events: order.iter().map(|&i| data.events()[i]).collect(),
    };

    let mut beta = DVector::<f64>::zeros(p);
    let mut fit = prep.evaluate(&beta);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let gnorm = fit.grad.norm();
        trace.push(gnorm);
        if gnorm < GRAD_TOL {
            converged = true;
            break;
        }
        let chol = fit
            .info
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("observed information is not positive definite".into()))?;
        let step = chol.solve(&fit.grad);
        let mut scale = 1.0;
        let mut accepted = false;
        // near the optimum the gain falls below the rounding noise of the sum
        let noise = 1e-12 * (1.0 + fit.loglik.abs());
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let cf = prep.evaluate(&cand);
            if cf.loglik.is_finite() && cf.loglik >= fit.loglik - noise {
                beta = cand;
                fit = cf;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let spread = beta
            .iter()
            .zip(&sd)
            .map(|(b, s)| (b * s).abs())
            .fold(0.0, f64::max);
        if spread > SEPARATION_LIMIT {
            return Err(Error::Separation { norm: beta.norm() });
        }
        if !accepted {
            // no ascent direction left at machine precision
            let gnorm = fit.grad.norm();
            trace.push(gnorm);
            converged = gnorm < GRAD_TOL.sqrt();
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: trace.len(),
            trace,
        });
    }
    // A "converged" fit far out on a flat ridge: the likelihood keeps rising
    // towards infinity but the gradient fell below tolerance first.
    let flat = (0..p).any(|j| fit.info[(j, j)] * sd[j] * sd[j] < 1e-6);
    let spread = beta.iter().zip(&sd).map(|(b, s)| (b * s).abs()).fold(0.0, f64::max);
    if flat && spread > 10.0 {
        return Err(Error::Separation { norm: beta.norm() });
    }

    let std_errors = match fit.info.clone().try_inverse() {
        Some(inv) => (0..p).map(|j| inv[(j, j)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; p],
    };

    // Breslow: H0(t) = Σ_{event times s ≤ t} d(s) / Σ_{risk set at s} exp(η)
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut s0 = 0.0;
    let mut i = 0;
    while i < n {
        let t = prep.times[i];
        let mut d = 0usize;
        while i < n && prep.times[i] == t {
            s0 += beta.dot(&DVector::from_column_slice(&prep.x[i])).exp();
            if prep.events[i] {
                d += 1;
            }
            i += 1;
        }
        if d > 0 {
            steps.push((t, d as f64 / s0));
        }
    }
    steps.reverse();
    let mut baseline = vec![[0.0, 0.0]];
    let mut cum = 0.0;
    for (t, inc) in steps {
        cum += inc;
        if t == 0.0 {
            baseline[0][1] = cum;
        } else {
            baseline.push([t, cum]);
        }
    }
    if baseline[0][1] != 0.0 {
        return Err(Error::invalid("events at t = 0 are not supported"));
    }

    let mut model = CoxModel::new(beta.iter().copied().collect(), baseline, mean)?;
    model.std_errors = std_errors;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![
                vec![1.0, 0.3],
                vec![0.0, -1.2],
                vec![1.0, 0.8],
                vec![0.0, 0.1],
                vec![1.0, -0.4],
                vec![0.0, 2.0],
                vec![1.0, 0.0],
                vec![0.0, -0.7],
            ],
            vec![2.0, 5.0, 3.0, 9.0, 3.0, 1.5, 7.0, 12.0],
            vec![true, true, true, false, true, true, false, true],
        )
        .unwrap()
    }

    /// Breslow log-likelihood by direct pair enumeration.
    fn naive_loglik(d: &SurvivalDataset, beta: &[f64]) -> f64 {
        let eta: Vec<f64> = d.rows().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        let mut ll = 0.0;
        for i in 0..d.n() {
            if d.events()[i] {
                let denom: f64 = (0..d.n())
                    .filter(|&j| d.times()[j] >= d.times()[i])
                    .map(|j| eta[j].exp())
                    .sum();
                ll += eta[i] - denom.ln();
            }
        }
        ll
    }

    #[test]
    fn fit_is_a_stationary_point_of_the_naive_likelihood() {
        let d = toy();
        let m = fit_coxph(&d).unwrap();
        let b = m.beta().to_vec();
        let base = naive_loglik(&d, &b);
        for j in 0..2 {
            for h in [-1e-4, 1e-4] {
                let mut bb = b.clone();
                bb[j] += h;
                assert!(naive_loglik(&d, &bb) <= base + 1e-12);
            }
        }
    }

    #[test]
    fn row_permutation_invariance() {
        let d = toy();
        let idx = [5, 2, 7, 0, 3, 6, 1, 4];
        let a = fit_coxph(&d).unwrap();
        let b = fit_coxph(&d.subset(&idx).unwrap()).unwrap();
        for (x, y) in a.beta().iter().zip(b.beta()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_a_feature_rescales_beta() {
        let d = toy();
        let c = 3.5;
        let rows: Vec<Vec<f64>> = d.rows().map(|r| vec![r[0], r[1] * c]).collect();
        let scaled = SurvivalDataset::new(rows, d.times().to_vec(), d.events().to_vec()).unwrap();
        let a = fit_coxph(&d).unwrap();
        let b = fit_coxph(&scaled).unwrap();
        assert!((a.beta()[1] / c - b.beta()[1]).abs() < 1e-6);
        assert!((a.beta()[0] - b.beta()[0]).abs() < 1e-6);
    }

    #[test]
    fn single_event_smoke() {
        let d = SurvivalDataset::new(
            vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]],
            vec![3.0, 4.0, 6.0, 9.0],
            vec![false, false, false, true],
        )
        .unwrap();
        let m = fit_coxph(&d).unwrap();
        assert!(m.beta()[0].is_finite());
        assert_eq!(m.baseline().len(), 2);
        assert_eq!(m.baseline()[1][0], 9.0);
    }

    #[test]
    fn separated_data_reported() {
        let d = SurvivalDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true, true, true, true],
        )
        .unwrap();
        assert!(matches!(fit_coxph(&d), Err(Error::Separation { .. })));
    }

    #[test]
    fn null_model_survival_is_nelson_aalen_like() {
        let m = CoxModel::new(vec![0.0], vec![[0.0, 0.0], [2.0, 0.25], [5.0, 0.6]], vec![0.0]).unwrap();
        assert_eq!(m.survival(&[3.0], 0.0).unwrap(), 1.0);
        assert_eq!(m.survival(&[3.0], 2.0).unwrap(), m.survival(&[-7.0], 2.0).unwrap());
        assert!((m.survival(&[1.0], 4.99).unwrap() - (-0.25f64).exp()).abs() < 1e-15);
        assert!((m.survival(&[1.0], 100.0).unwrap() - (-0.6f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn survival_monotone_and_json_round_trip() {
        let m = fit_coxph(&toy()).unwrap();
        for x in [[1.0, 0.0], [0.0, 2.0]] {
            let mut prev = 1.0;
            for i in 0..30 {
                let s = m.survival(&x, i as f64 * 0.5).unwrap();
                assert!(s <= prev && s > 0.0);
                prev = s;
            }
        }
        let back = CoxModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(CoxModel::from_json(r#"{"beta":[1],"baseline":[[0,0],[1,0.5],[2,0.2]],"mean":[0]}"#).is_err());
    }

    #[test]
    fn large_sample_fit_converges_near_truth() {
        use crate::simulate::{simulate_dataset, ScenarioId, SimulationConfig};
        let d = simulate_dataset(&SimulationConfig::new(ScenarioId::Numbered(1), 1000)).unwrap();
        let m = fit_coxph(&d.dataset).unwrap();
        for (b, truth) in m.beta().iter().zip([0.4, -0.8, -0.6]) {
            assert!((b - truth).abs() < 0.2, "{b}");
        }
        assert!(m.std_errors().iter().all(|s| *s > 0.0 && *s < 0.1));
    }
}
