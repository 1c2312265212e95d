use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::coalition::Coalition;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::stream;

/// How absent features are filled in when evaluating a coalition.
#[derive(Debug)]
pub enum Imputer {
    /// Replace absent features by the rows of a background sample.
    Marginal(MarginalImputer),
    /// Draw absent features from their exact Gaussian conditional given the
    /// present ones.
    ConditionalGaussian(GaussianImputer),
}

#[derive(Debug, Clone)]
pub struct MarginalImputer {
    p: usize,
    background: Vec<f64>,
}

impl MarginalImputer {
    pub fn new(p: usize, background: Vec<f64>) -> Result<Self> {
        if p == 0 || background.is_empty() || background.len() % p != 0 {
            return Err(Error::invalid(format!(
                "background must be a non-empty row-major matrix with {p} columns"
            )));
        }
        if let Some(&v) = background.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "background",
                value: v,
            });
        }
        Ok(MarginalImputer { p, background })
    }

    pub fn rows(&self) -> &[f64] {
        &self.background
    }

    pub fn n_rows(&self) -> usize {
        self.background.len() / self.p
    }
}

struct Conditional {
    /// `Σ_{M̄M} Σ_{MM}⁻¹`
    regression: DMatrix<f64>,
    /// Cholesky factor of the Schur complement.
    chol: DMatrix<f64>,
}

pub struct GaussianImputer {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    n_samples: usize,
    seed: u64,
    /// `n_samples × p` standard normals shared by every coalition.
    base: Vec<f64>,
    cache: DashMap<u64, Arc<Conditional>>,
}

impl std::fmt::Debug for GaussianImputer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussianImputer")
            .field("mean", &self.mean.as_slice())
            .field("n_samples", &self.n_samples)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl GaussianImputer {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, n_samples: usize, seed: u64) -> Result<Self> {
        let p = mean.len();
        if cov.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: cov.nrows(),
            });
        }
        if n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        if (0..p).any(|i| (0..i).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12)) {
            return Err(Error::invalid("covariance must be symmetric"));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?
            .l();
        let mut base = Vec::with_capacity(n_samples * p);
        for s in 0..n_samples {
            let mut rng = stream(seed, "conditional-base", s as u64);
            base.extend((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        Ok(GaussianImputer {
            mean: DVector::from_vec(mean),
            cov,
            chol,
            n_samples,
            seed,
            base,
            cache: DashMap::new(),
        })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn conditional(&self, present: Coalition) -> Result<Arc<Conditional>> {
        if let Some(c) = self.cache.get(&present.bits()) {
            return Ok(c.clone());
        }
        let (regression, schur) = regression_and_schur(&self.cov, present, self.p())?;
        let chol = cholesky_psd(schur)?;
        let c = Arc::new(Conditional { regression, chol });
        self.cache.insert(present.bits(), c.clone());
        Ok(c)
    }

    /// Unconditional draws `μ + L·z_s`.
    fn reference_rows(&self) -> Vec<f64> {
        let p = self.p();
        let mut out = Vec::with_capacity(self.n_samples * p);
        for z in self.base.chunks_exact(p) {
            let x = &self.mean + &self.chol * DVector::from_column_slice(z);
            out.extend_from_slice(x.as_slice());
        }
        out
    }

    fn impute(&self, x: &[f64], present: Coalition, out: &mut Vec<f64>) -> Result<()> {
        let p = self.p();
        let absent: Vec<usize> = Coalition::full(p).difference(present).members().collect();
        let given: Vec<usize> = present.members().collect();
        let cond = self.conditional(present)?;
        let dx = DVector::from_iterator(given.len(), given.iter().map(|&j| x[j] - self.mean[j]));
        let mu = DVector::from_iterator(absent.len(), absent.iter().map(|&j| self.mean[j])) + &cond.regression * dx;
        out.clear();
        out.reserve(self.n_samples * p);
        for z in self.base.chunks_exact(p) {
            // common random numbers: the absent features' own base normals
            let zs = DVector::from_iterator(absent.len(), absent.iter().map(|&j| z[j]));
            let draw = &mu + &cond.chol * zs;
            let start = out.len();
            out.extend_from_slice(x);
            for (k, &j) in absent.iter().enumerate() {
                out[start + j] = draw[k];
            }
        }
        Ok(())
    }
}

/// `(Σ_{M̄M} Σ_{MM}⁻¹, Σ_{M̄M̄} − Σ_{M̄M} Σ_{MM}⁻¹ Σ_{MM̄})` for present set `M`.
fn regression_and_schur(cov: &DMatrix<f64>, present: Coalition, p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let given: Vec<usize> = present.members().collect();
    let absent: Vec<usize> = Coalition::full(p).difference(present).members().collect();
    let s_aa = cov.select_rows(&absent).select_columns(&absent);
    if given.is_empty() {
        return Ok((DMatrix::zeros(absent.len(), 0), s_aa));
    }
    let s_ag = cov.select_rows(&absent).select_columns(&given);
    let s_gg = cov.select_rows(&given).select_columns(&given);
    let chol = s_gg
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("covariance block of {{{present}}} is singular")))?;
    // Σ_ag Σ_gg⁻¹ = (Σ_gg⁻¹ Σ_ga)ᵀ
    let regression = chol.solve(&s_ag.transpose()).transpose();
    let mut schur = s_aa - &regression * s_ag.transpose();
    // symmetrize away rounding
    schur = (&schur + schur.transpose()) * 0.5;
    Ok((regression, schur))
}

fn cholesky_psd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m);
    }
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    m.clone()
        .cholesky()
        .or_else(|| (m + DMatrix::identity(n, n) * (scale * 1e-12)).cholesky())
        .map(|c| c.l())
        .ok_or_else(|| Error::Singular("conditional covariance is not positive semi-definite".into()))
}

/// Mean and covariance of `X_{M̄} | X_M = x_M` for a Gaussian `X`. `x_m`
/// lists the values of the features in `present`, in ascending index order.
pub fn conditional_gaussian_params(
    mean: &[f64],
    cov: &DMatrix<f64>,
    present: Coalition,
    x_m: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = mean.len();
    if cov.shape() != (p, p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: cov.nrows(),
        });
    }
    if !present.fits(p) || present.is_empty() || present == Coalition::full(p) {
        return Err(Error::invalid("conditioning set must be a non-empty proper subset"));
    }
    if x_m.len() != present.len() {
        return Err(Error::DimensionMismatch {
            expected: present.len(),
            got: x_m.len(),
        });
    }
    let (regression, schur) = regression_and_schur(cov, present, p)?;
    let dx = DVector::from_iterator(x_m.len(), present.members().zip(x_m).map(|(j, v)| v - mean[j]));
    let shift = regression * dx;
    let cond_mean = Coalition::full(p)
        .difference(present)
        .members()
        .zip(shift.iter())
        .map(|(j, s)| mean[j] + s)
        .collect();
    Ok((cond_mean, schur))
}

impl Imputer {
    pub fn marginal(p: usize, background: Vec<f64>) -> Result<Self> {
        Ok(Imputer::Marginal(MarginalImputer::new(p, background)?))
    }

    pub fn marginal_from(data: &SurvivalDataset) -> Result<Self> {
        Self::marginal(data.p(), data.features().to_vec())
    }

    pub fn conditional_gaussian(mean: Vec<f64>, cov: DMatrix<f64>, n_samples: usize, seed: u64) -> Result<Self> {
        Ok(Imputer::ConditionalGaussian(GaussianImputer::new(mean, cov, n_samples, seed)?))
    }

    pub fn p(&self) -> usize {
        match self {
            Imputer::Marginal(m) => m.p,
            Imputer::ConditionalGaussian(g) => g.p(),
        }
    }

    /// Rows whose mean prediction is the game's reference `E[F(t|X)]`.
    pub fn reference_rows(&self) -> Vec<f64> {
        match self {
            Imputer::Marginal(m) => m.background.clone(),
            Imputer::ConditionalGaussian(g) => g.reference_rows(),
        }
    }

    /// Fills `out` with the imputed rows for coalition `present` at instance
    /// `x`, row-major. The full coalition yields the single row `x`.
    pub fn impute(&self, x: &[f64], present: Coalition, out: &mut Vec<f64>) -> Result<()> {
        let p = self.p();
        if x.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: x.len() });
        }
        if present == Coalition::full(p) {
            out.clear();
            out.extend_from_slice(x);
            return Ok(());
        }
        match self {
            Imputer::Marginal(m) => {
                out.clear();
                out.extend_from_slice(&m.background);
                let members: Vec<usize> = present.members().collect();
                for row in out.chunks_exact_mut(p) {
                    for &j in &members {
                        row[j] = x[j];
                    }
                }
                Ok(())
            }
            Imputer::ConditionalGaussian(g) => {
                if present.is_empty() {
                    out.clear();
                    out.extend(g.reference_rows());
                    return Ok(());
                }
                g.impute(x, present, out)
            }
        }
    }
}
