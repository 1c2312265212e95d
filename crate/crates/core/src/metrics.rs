//! Evaluation of explanations and survival predictions.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::explanation::InteractionExplanation;
use crate::grid::TimeGrid;

pub const DEFAULT_SAVGOL_WINDOW: usize = 11;
pub const DEFAULT_SAVGOL_ORDER: usize = 3;
pub const DEFAULT_TIME_TOLERANCE: f64 = 1e-6;

/// Normalized root-mean-square gap between predictions and attribution sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAccuracyCurve {
    pub grid: TimeGrid,
    pub sigma: Vec<f64>,
    pub mean: f64,
}

/// `σ(t) = sqrt(mean_i (F_i(t) − F̄(t) − Φ_i(t))² / mean_i F_i(t)²)` where
/// `Φ_i` sums every attribution curve of instance `i` and `F̄` is the
/// baseline curve.
pub fn local_accuracy(
    explanations: &[InteractionExplanation],
    predictions: &[Vec<f64>],
    baseline: &[f64],
) -> Result<LocalAccuracyCurve> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::invalid("local accuracy needs at least one instance"))?;
    if predictions.len() != explanations.len() {
        return Err(Error::DimensionMismatch {
            expected: explanations.len(),
            got: predictions.len(),
        });
    }
    let grid = first.grid().clone();
    let n_t = grid.len();
    if baseline.len() != n_t {
        return Err(Error::DimensionMismatch {
            expected: n_t,
            got: baseline.len(),
        });
    }
    let mut num = vec![0.0; n_t];
    let mut den = vec![0.0; n_t];
    for (e, f) in explanations.iter().zip(predictions) {
        if e.grid() != &grid {
            return Err(Error::invalid("explanations use different grids"));
        }
        if f.len() != n_t {
            return Err(Error::DimensionMismatch {
                expected: n_t,
                got: f.len(),
            });
        }
        let phi = e.attribution_sum();
        for ti in 0..n_t {
            let r = f[ti] - baseline[ti] - phi[ti];
            num[ti] += r * r;
            den[ti] += f[ti] * f[ti];
        }
    }
    let mut sigma = Vec::with_capacity(n_t);
    for ti in 0..n_t {
        if den[ti] <= 0.0 {
            return Err(Error::invalid(format!(
                "mean squared prediction is zero at t = {}",
                grid.points()[ti]
            )));
        }
        sigma.push((num[ti] / den[ti]).sqrt());
    }
    let mean = sigma.iter().sum::<f64>() / n_t as f64;
    Ok(LocalAccuracyCurve { grid, sigma, mean })
}

/// Harrell's C-index: pairs with `y_i < y_j` and an event at `y_i` are
/// comparable, and concordant when `i` has the higher risk. Risk ties count
/// one half.
pub fn concordance_index(risk_scores: &[f64], data: &SurvivalDataset) -> Result<f64> {
    if risk_scores.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: risk_scores.len(),
        });
    }
    let (times, events) = (data.times(), data.events());
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (mut score, mut pairs) = (0.0, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        if !events[i] {
            continue;
        }
        for &j in &order[pos + 1..] {
            if times[j] <= times[i] {
                continue;
            }
            pairs += 1;
            score += match risk_scores[i].partial_cmp(&risk_scores[j]) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    if pairs == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(score / pairs as f64)
}

/// Kaplan–Meier estimate of the censoring survival function `G`.
#[derive(Debug, Clone)]
pub struct CensoringKm {
    times: Vec<f64>,
    surv: Vec<f64>,
}

impl CensoringKm {
    pub fn fit(data: &SurvivalDataset) -> Self {
        let (y, d) = (data.times(), data.events());
        let mut idx: Vec<usize> = (0..data.n()).collect();
        idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let mut times = Vec::new();
        let mut surv = Vec::new();
        let mut g = 1.0;
        let mut i = 0;
        while i < idx.len() {
            let t = y[idx[i]];
            let at_risk = idx.len() - i;
            let mut censored = 0;
            while i < idx.len() && y[idx[i]] == t {
                if !d[idx[i]] {
                    censored += 1;
                }
                i += 1;
            }
            if censored > 0 {
                g *= 1.0 - censored as f64 / at_risk as f64;
                times.push(t);
                surv.push(g);
            }
        }
        CensoringKm { times, surv }
    }

    /// `G(t)`, right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }

    /// `G(t−)`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }
}

/// Censoring-weighted Brier score at every grid point, with the censoring
/// distribution estimated on `data` itself.
pub fn brier_scores(surv: &[Vec<f64>], data: &SurvivalDataset, grid: &TimeGrid) -> Result<Vec<f64>> {
    brier_scores_with(&CensoringKm::fit(data), surv, data, grid)
}

/// Censoring-weighted Brier score with a given censoring estimate, e.g. one
/// fitted on training data.
pub fn brier_scores_with(
    km: &CensoringKm,
    surv: &[Vec<f64>],
    data: &SurvivalDataset,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    if surv.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: surv.len(),
        });
    }
    let max_time = data.times().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(&t) = grid.points().iter().find(|&&t| t >= max_time) {
        return Err(Error::invalid(format!(
            "grid point {t} is not below the largest observed time {max_time}"
        )));
    }
    let (y, d) = (data.times(), data.events());
    let n = data.n() as f64;
    let mut out = Vec::with_capacity(grid.len());
    for (ti, &t) in grid.points().iter().enumerate() {
        let g_t = km.at(t);
        let mut acc = 0.0;
        for i in 0..data.n() {
            if surv[i].len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    got: surv[i].len(),
                });
            }
            let s = surv[i][ti];
            if y[i] <= t && d[i] {
                let g = km.before(y[i]);
                if g <= 0.0 {
                    return Err(Error::CensoringExhausted { t: y[i] });
                }
                acc += s * s / g;
            } else if y[i] > t {
                if g_t <= 0.0 {
                    return Err(Error::CensoringExhausted { t });
                }
                acc += (1.0 - s) * (1.0 - s) / g_t;
            }
        }
        out.push(acc / n);
    }
    Ok(out)
}

/// Trapezoid integral of the censoring-weighted Brier score over the grid,
/// divided by the grid span.
pub fn integrated_brier(surv: &[Vec<f64>], data: &SurvivalDataset, grid: &TimeGrid) -> Result<f64> {
    integrated_brier_with(&CensoringKm::fit(data), surv, data, grid)
}

pub fn integrated_brier_with(
    km: &CensoringKm,
    surv: &[Vec<f64>],
    data: &SurvivalDataset,
    grid: &TimeGrid,
) -> Result<f64> {
    let bs = brier_scores_with(km, surv, data, grid)?;
    let t = grid.points();
    if t.len() == 1 {
        return Ok(bs[0]);
    }
    let area: f64 = (1..t.len()).map(|i| 0.5 * (bs[i] + bs[i - 1]) * (t[i] - t[i - 1])).sum();
    Ok(area / (t[t.len() - 1] - t[0]))
}

/// Savitzky–Golay smoothing. Interior points use the centered window; the
/// first and last `window / 2` points are evaluated from the polynomial fit
/// of the boundary window.
pub fn savgol_smooth(series: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window == 0 {
        return Err(Error::invalid(format!("window must be odd, got {window}")));
    }
    if poly_order >= window {
        return Err(Error::invalid(format!(
            "polynomial order {poly_order} must be below the window {window}"
        )));
    }
    let n = series.len();
    if window > n {
        return Err(Error::invalid(format!("window {window} exceeds series length {n}")));
    }
    let half = window / 2;
    let scale = half.max(1) as f64;
    let vander = |offset: usize| {
        DMatrix::from_fn(window, poly_order + 1, |r, c| ((r as f64 - offset as f64) / scale).powi(c as i32))
    };
    // weights of each window position for evaluating the fit at `offset`
    let weights = |offset: usize| -> Result<Vec<f64>> {
        let v = vander(offset);
        let pinv = v
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?;
        Ok(pinv.row(0).iter().copied().collect())
    };
    let mut out = vec![0.0; n];
    let center = weights(half)?;
    for i in half..n - half {
        out[i] = center.iter().zip(&series[i - half..i + half + 1]).map(|(w, x)| w * x).sum();
    }
    for off in 0..half {
        let w = weights(off)?;
        out[off] = w.iter().zip(&series[..window]).map(|(w, x)| w * x).sum();
        let w = weights(window - 1 - off)?;
        out[n - 1 - off] = w.iter().zip(&series[n - window..]).map(|(w, x)| w * x).sum();
    }
    Ok(out)
}

/// Smooths every attribution curve with the given filter settings.
pub fn smooth_explanation(
    expl: &InteractionExplanation,
    window: usize,
    poly_order: usize,
) -> Result<InteractionExplanation> {
    let mut err = None;
    let out = expl.map_curves(|c| match savgol_smooth(c, window, poly_order) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            c.to_vec()
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Coalitions split by whether their attribution varies over time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeDependence {
    pub dependent: BTreeSet<Coalition>,
    pub independent: BTreeSet<Coalition>,
}

/// A curve is time-dependent when `max_t |φ(t) − mean_t φ| > tol`.
pub fn classify_time_dependence(expl: &InteractionExplanation, tol: f64) -> TimeDependence {
    let mut out = TimeDependence::default();
    for (c, v) in expl.values() {
        if time_variation(v) > tol {
            out.dependent.insert(*c);
        } else {
            out.independent.insert(*c);
        }
    }
    out
}

/// `max_t |v(t) − mean_t v|`.
pub fn time_variation(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).abs()).fold(0.0, f64::max)
}

/// Mean squared difference over every `(coalition, t)` entry.
pub fn approximation_error(approx: &InteractionExplanation, exact: &InteractionExplanation) -> Result<f64> {
    if approx.grid().len() != exact.grid().len() {
        return Err(Error::DimensionMismatch {
            expected: exact.grid().len(),
            got: approx.grid().len(),
        });
    }
    if approx.order() != exact.order() {
        return Err(Error::invalid(format!(
            "orders differ: {} vs {}",
            approx.order(),
            exact.order()
        )));
    }
    if !approx.values().keys().eq(exact.values().keys()) {
        return Err(Error::invalid("explanations cover different coalitions"));
    }
    Ok(mean_squared_difference(approx.values(), exact.values()))
}

/// Mean squared difference of two curve maps over their shared entries.
pub fn mean_squared_difference(a: &BTreeMap<Coalition, Vec<f64>>, b: &BTreeMap<Coalition, Vec<f64>>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for (c, u) in a {
        if let Some(v) = b.get(c) {
            for (x, y) in u.iter().zip(v) {
                sum += (x - y) * (x - y);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean and sample standard deviation of each curve over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimewiseSummary {
    pub mean: f64,
    pub sd: f64,
}

pub fn timewise_summary(expl: &InteractionExplanation) -> BTreeMap<Coalition, TimewiseSummary> {
    expl.values()
        .iter()
        .map(|(c, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (*c, TimewiseSummary { mean, sd })
        })
        .collect()
}

/// Least-squares polynomial fit evaluated at `x0`, used by tests as an
/// independent smoothing reference.
#[doc(hidden)]
pub fn polyfit_eval(xs: &[f64], ys: &[f64], order: usize, x0: f64) -> f64 {
    let v = DMatrix::from_fn(xs.len(), order + 1, |r, c| (xs[r] - x0).powi(c as i32));
    let y = DVector::from_column_slice(ys);
    let coef = (v.transpose() * &v).lu().solve(&(v.transpose() * y)).expect("well-posed fit");
    coef[0]
}
