use std::sync::Arc;

use dashmap::DashMap;

use crate::error::{Error, Result};
use crate::explanation::PredictionTarget;
use crate::grid::TimeGrid;
use crate::survmodel::{CoxModel, GroundTruthModel, UnitProfile};

/// A prediction function `F(t|x)` evaluated on a fixed time grid.
pub trait Predictor: Send + Sync {
    fn p(&self) -> usize;

    fn target(&self) -> PredictionTarget;

    fn grid(&self) -> &TimeGrid;

    /// Writes `F(t|x)` for every grid point into `out`.
    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid().len()];
        self.predict_into(x, &mut out)?;
        Ok(out)
    }

    /// Mean curve over the rows of a row-major `rows.len() / p` by `p` matrix.
    fn mean_into(&self, rows: &[f64], out: &mut [f64]) -> Result<()> {
        rowwise_mean(self, rows, out)
    }
}

fn rowwise_mean<P: Predictor + ?Sized>(pred: &P, rows: &[f64], out: &mut [f64]) -> Result<()> {
    let p = pred.p();
    let n = rows.len() / p;
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut buf = vec![0.0; out.len()];
    for row in rows.chunks_exact(p) {
        pred.predict_into(row, &mut buf)?;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
    out.iter_mut().for_each(|v| *v /= n as f64);
    Ok(())
}

const PROFILE_CACHE_LIMIT: usize = 200_000;

/// Ground-truth model predictions. Survival curves reuse one quadrature per
/// distinct time-varying coefficient `b` of `G = a + b·log(1+t)`.
pub struct GroundTruthPredictor {
    model: GroundTruthModel,
    target: PredictionTarget,
    grid: TimeGrid,
    log1p_t: Vec<f64>,
    log_lambda: f64,
    profile: UnitProfile,
    cache: DashMap<u64, Arc<[f64]>>,
}

impl GroundTruthPredictor {
    pub fn new(model: GroundTruthModel, target: PredictionTarget, grid: TimeGrid) -> Result<Self> {
        let profile = UnitProfile::new(grid.points())?;
        Ok(GroundTruthPredictor {
            log1p_t: grid.points().iter().map(|t| t.ln_1p()).collect(),
            log_lambda: model.lambda().ln(),
            model,
            target,
            grid,
            profile,
            cache: DashMap::new(),
        })
    }

    pub fn model(&self) -> &GroundTruthModel {
        &self.model
    }

    fn unit_profile(&self, b: f64) -> Result<Arc<[f64]>> {
        let key = b.to_bits();
        if let Some(v) = self.cache.get(&key) {
            return Ok(v.clone());
        }
        let curve: Arc<[f64]> = self.profile.eval(b)?.into();
        if self.cache.len() >= PROFILE_CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(key, curve.clone());
        Ok(curve)
    }
}

impl Predictor for GroundTruthPredictor {
    fn p(&self) -> usize {
        self.model.p()
    }

    fn target(&self) -> PredictionTarget {
        self.target
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.model.risk().check_dim(x)?;
        let (a, b) = self.model.risk().split(x);
        match self.target {
            PredictionTarget::LogHazard => {
                for (o, l) in out.iter_mut().zip(&self.log1p_t) {
                    *o = self.log_lambda + a + b * l;
                }
            }
            PredictionTarget::Hazard => {
                for (o, l) in out.iter_mut().zip(&self.log1p_t) {
                    *o = (self.log_lambda + a + b * l).exp();
                }
            }
            PredictionTarget::Survival => {
                let j = self.unit_profile(b)?;
                let scale = (self.log_lambda + a).exp();
                for (o, jt) in out.iter_mut().zip(j.iter()) {
                    *o = (-scale * jt).exp();
                }
            }
        }
        if let Some(&v) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "prediction",
                value: v,
            });
        }
        Ok(())
    }

    fn mean_into(&self, rows: &[f64], out: &mut [f64]) -> Result<()> {
        if self.target != PredictionTarget::LogHazard {
            return rowwise_mean(self, rows, out);
        }
        // linear in (a, b), so average those first
        let p = self.p();
        let n = (rows.len() / p) as f64;
        let (mut sa, mut sb) = (0.0, 0.0);
        for row in rows.chunks_exact(p) {
            let (a, b) = self.model.risk().split(row);
            sa += a;
            sb += b;
        }
        let (ma, mb) = (sa / n, sb / n);
        for (o, l) in out.iter_mut().zip(&self.log1p_t) {
            *o = self.log_lambda + ma + mb * l;
        }
        Ok(())
    }
}

/// Survival predictions of a fitted Cox model.
pub struct CoxPredictor {
    model: CoxModel,
    grid: TimeGrid,
    baseline: Vec<f64>,
}

impl CoxPredictor {
    pub fn new(model: CoxModel, target: PredictionTarget, grid: TimeGrid) -> Result<Self> {
        if target != PredictionTarget::Survival {
            return Err(Error::invalid(
                "Cox models provide survival predictions only (their baseline hazard is a step function)",
            ));
        }
        let baseline = grid.points().iter().map(|&t| model.baseline_cumhaz(t)).collect();
        Ok(CoxPredictor {
            model,
            grid,
            baseline,
        })
    }

    pub fn model(&self) -> &CoxModel {
        &self.model
    }
}

impl Predictor for CoxPredictor {
    fn p(&self) -> usize {
        self.model.p()
    }

    fn target(&self) -> PredictionTarget {
        PredictionTarget::Survival
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r = self.model.linear_predictor(x)?.exp();
        for (o, h) in out.iter_mut().zip(&self.baseline) {
            *o = (-h * r).exp();
        }
        Ok(())
    }
}
