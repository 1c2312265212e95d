use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{aggregate_ksii, exact_sii, sii_weight, InteractionValues};
use super::sampler::CoalitionSample;
use crate::coalition::{binom, coalition_iter, Coalition, MAX_EXACT_PLAYERS};
use crate::error::{Error, Result};
use crate::game::{evaluate_all_coalitions, TimeGame, DEFAULT_MEMORY_BUDGET};
use crate::rng::stream;

/// Ridge added to under-determined regression solves.
pub const REGRESSION_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxMethod {
    MonteCarlo,
    Permutation,
    Regression,
}

impl ApproxMethod {
    pub const ALL: [ApproxMethod; 3] = [
        ApproxMethod::MonteCarlo,
        ApproxMethod::Permutation,
        ApproxMethod::Regression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ApproxMethod::MonteCarlo => "mc",
            ApproxMethod::Permutation => "perm",
            ApproxMethod::Regression => "regression",
        }
    }
}

impl fmt::Display for ApproxMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApproxMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mc" | "montecarlo" | "monte-carlo" => Ok(ApproxMethod::MonteCarlo),
            "perm" | "permutation" => Ok(ApproxMethod::Permutation),
            "regression" | "kernel" => Ok(ApproxMethod::Regression),
            other => Err(Error::Parse(format!("unknown approximation method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproximatorConfig {
    pub method: ApproxMethod,
    /// Coalition evaluations allowed, counting `∅` and `P`.
    pub budget: usize,
    pub seed: u64,
    /// Draw a fresh coalition sample for every timepoint instead of sharing
    /// one sample across the grid.
    #[serde(default)]
    pub resample_per_timepoint: bool,
}

impl ApproximatorConfig {
    pub fn new(method: ApproxMethod, budget: usize, seed: u64) -> Self {
        ApproximatorConfig {
            method,
            budget,
            seed,
            resample_per_timepoint: false,
        }
    }

    pub fn validate(&self, p: usize, k: usize) -> Result<()> {
        if k == 0 || k > p {
            return Err(Error::invalid(format!("order must be in 1..={p}, got {k}")));
        }
        let min = match self.method {
            ApproxMethod::Regression => 2 * (k + 1),
            _ => 2,
        };
        if self.budget < min {
            return Err(Error::invalid(format!(
                "{} needs a budget of at least {min}, got {}",
                self.method, self.budget
            )));
        }
        Ok(())
    }
}

/// Run statistics of an approximation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Distinct coalitions evaluated (summed over timepoints when resampling).
    pub evaluations: usize,
    /// Every coalition was evaluated, so the result is exact.
    pub exhaustive: bool,
    /// The regression design was rank deficient and needed a ridge term.
    pub unstable: bool,
    /// Smallest achieved design rank of the regression.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_size: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    /// k-SII curves for every coalition with `1 ≤ |S| ≤ k`.
    pub values: InteractionValues,
    pub diagnostics: Diagnostics,
}

pub fn approx_montecarlo(game: &dyn TimeGame, k: usize, budget: usize, seed: u64) -> Result<Estimate> {
    approximate(game, k, &ApproximatorConfig::new(ApproxMethod::MonteCarlo, budget, seed))
}

pub fn approx_permutation(game: &dyn TimeGame, k: usize, budget: usize, seed: u64) -> Result<Estimate> {
    approximate(game, k, &ApproximatorConfig::new(ApproxMethod::Permutation, budget, seed))
}

pub fn approx_regression(game: &dyn TimeGame, k: usize, budget: usize, seed: u64) -> Result<Estimate> {
    approximate(game, k, &ApproximatorConfig::new(ApproxMethod::Regression, budget, seed))
}

/// Budgeted k-SII estimate with the configured method.
pub fn approximate(game: &dyn TimeGame, k: usize, config: &ApproximatorConfig) -> Result<Estimate> {
    let p = game.n_players();
    config.validate(p, k)?;
    let purpose = config.method.as_str();
    if !config.resample_per_timepoint {
        let mut rng = stream(config.seed, purpose, 0);
        return run(game, k, config, &mut rng);
    }
    let n_t = game.n_times();
    let parts: Vec<Estimate> = (0..n_t)
        .into_par_iter()
        .map(|ti| {
            let slice = TimeSlice { inner: game, ti };
            let mut rng = stream(config.seed, purpose, ti as u64 + 1);
            run(&slice, k, config, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut values = InteractionValues::new();
    let mut diagnostics = Diagnostics {
        exhaustive: true,
        ..Diagnostics::default()
    };
    for part in &parts {
        for (c, v) in &part.values {
            values.entry(*c).or_insert_with(Vec::new).push(v[0]);
        }
        let d = &part.diagnostics;
        diagnostics.evaluations += d.evaluations;
        diagnostics.exhaustive &= d.exhaustive;
        diagnostics.unstable |= d.unstable;
        diagnostics.basis_size = d.basis_size;
        diagnostics.rank = match (diagnostics.rank, d.rank) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    Ok(Estimate { values, diagnostics })
}

fn run<R: Rng>(game: &dyn TimeGame, k: usize, config: &ApproximatorConfig, rng: &mut R) -> Result<Estimate> {
    match config.method {
        ApproxMethod::MonteCarlo => montecarlo(game, k, config.budget, rng),
        ApproxMethod::Regression => regression(game, k, config.budget, rng),
        ApproxMethod::Permutation => {
            let p = game.n_players();
            if p <= MAX_EXACT_PLAYERS && config.budget >= 1usize << p {
                let table = evaluate_all_coalitions(game, DEFAULT_MEMORY_BUDGET)?;
                return Ok(Estimate {
                    values: aggregate_ksii(&exact_sii(&table, k)?, k, p)?,
                    diagnostics: Diagnostics {
                        evaluations: 1 << p,
                        exhaustive: true,
                        ..Diagnostics::default()
                    },
                });
            }
            let mut order: Vec<usize> = (0..p).collect();
            let perms = std::iter::from_fn(move || {
                order.shuffle(rng);
                Some(order.clone())
            });
            let (sii, evaluations) = permutation_sii(game, k, Some(config.budget), perms)?;
            Ok(Estimate {
                values: aggregate_ksii(&sii, k, p)?,
                diagnostics: Diagnostics {
                    evaluations,
                    ..Diagnostics::default()
                },
            })
        }
    }
}

/// One timepoint of a game, as a single-time game.
struct TimeSlice<'a> {
    inner: &'a dyn TimeGame,
    ti: usize,
}

impl TimeGame for TimeSlice<'_> {
    fn n_players(&self) -> usize {
        self.inner.n_players()
    }

    fn n_times(&self) -> usize {
        1
    }

    fn value_curve(&self, coalition: Coalition) -> Result<Vec<f64>> {
        Ok(vec![self.inner.value_curve(coalition)?[self.ti]])
    }
}

type Values = HashMap<Coalition, Vec<f64>>;

fn evaluate(game: &dyn TimeGame, coalitions: &[Coalition]) -> Result<Values> {
    let n_t = game.n_times();
    coalitions
        .par_iter()
        .map(|&c| {
            let v = game.value_curve(c)?;
            if v.len() != n_t {
                return Err(Error::DimensionMismatch {
                    expected: n_t,
                    got: v.len(),
                });
            }
            Ok((c, v))
        })
        .collect()
}

/// `γ[s][t][l]`: weight of `ν(T)` in the index of `K` when `|K| = s`,
/// `|T| = t`, `|T ∩ K| = l`.
fn gamma_table(p: usize, k: usize) -> Vec<Vec<Vec<f64>>> {
    (0..=k)
        .map(|s| {
            (0..=p)
                .map(|t| {
                    (0..=s)
                        .map(|l| {
                            if s == 0 || l > t || t - l > p - s {
                                return 0.0;
                            }
                            let sign = if (s - l) % 2 == 0 { 1.0 } else { -1.0 };
                            sign * sii_weight(p, s, t - l)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Shapley interaction indices of orders `1..=k` estimated from a sample:
/// enumerated strata contribute exactly, sampled coalitions through
/// importance weights.
fn sample_sii(sample: &CoalitionSample, values: &Values, k: usize, n_t: usize) -> Result<InteractionValues> {
    let p = sample.p();
    let gamma = gamma_table(p, k);
    let mut terms: Vec<(Coalition, f64, &[f64])> = Vec::new();
    for c in sample.enumerated() {
        terms.push((*c, 1.0, &values[c]));
    }
    let n = sample.n_draws() as f64;
    for (c, &count) in sample.sampled() {
        let w = count as f64 / (n * sample.draw_probability(*c));
        terms.push((*c, w, &values[c]));
    }
    let targets: Vec<Coalition> = coalition_iter(p, k)?.filter(|c| !c.is_empty()).collect();
    Ok(targets
        .into_par_iter()
        .map(|kk| {
            let g = &gamma[kk.len()];
            let mut acc = vec![0.0; n_t];
            for (t, w, v) in &terms {
                let coef = w * g[t.len()][t.intersection(kk).len()];
                if coef != 0.0 {
                    for (a, x) in acc.iter_mut().zip(v.iter()) {
                        *a += coef * x;
                    }
                }
            }
            (kk, acc)
        })
        .collect())
}

fn montecarlo<R: Rng>(game: &dyn TimeGame, k: usize, budget: usize, rng: &mut R) -> Result<Estimate> {
    let p = game.n_players();
    let sample = CoalitionSample::draw(p, budget, rng)?;
    let coalitions: Vec<Coalition> = sample.coalitions().collect();
    let values = evaluate(game, &coalitions)?;
    let sii = sample_sii(&sample, &values, k, game.n_times())?;
    Ok(Estimate {
        values: aggregate_ksii(&sii, k, p)?,
        diagnostics: Diagnostics {
            evaluations: coalitions.len(),
            exhaustive: sample.is_complete(),
            ..Diagnostics::default()
        },
    })
}

/// Kernel-weighted least squares on the k-additive basis with `Σβ = ν(P)`
/// enforced through the KKT system, followed by a sampled estimate of the
/// k-SII of the fit residual.
fn regression<R: Rng>(game: &dyn TimeGame, k: usize, budget: usize, rng: &mut R) -> Result<Estimate> {
    let p = game.n_players();
    let n_t = game.n_times();
    let sample = CoalitionSample::draw(p, budget, rng)?;
    let coalitions: Vec<Coalition> = sample.coalitions().collect();
    let values = evaluate(game, &coalitions)?;
    let full = Coalition::full(p);

    let basis: Vec<Coalition> = coalition_iter(p, k)?.filter(|c| !c.is_empty()).collect();
    let d = basis.len();
    let mut rows: Vec<(Coalition, f64)> = Vec::new();
    for &c in sample.enumerated() {
        let s = c.len();
        if s != 0 && s != p {
            rows.push((c, (p - 1) as f64 / (binom(p, s) * (s * (p - s)) as f64)));
        }
    }
    let per_draw = sample.sampled_kernel_mass() / sample.n_draws().max(1) as f64;
    for (&c, &count) in sample.sampled() {
        rows.push((c, per_draw * count as f64));
    }

    let xw = DMatrix::from_fn(rows.len(), d, |i, j| {
        if basis[j].is_subset_of(rows[i].0) {
            rows[i].1.sqrt()
        } else {
            0.0
        }
    });
    let rank = if rows.is_empty() {
        0
    } else {
        let sv = xw.clone().svd(false, false).singular_values;
        let max = sv.max();
        let tol = max * rows.len().max(d) as f64 * f64::EPSILON;
        sv.iter().filter(|&&v| v > tol).count()
    };
    let unstable = rank < d;

    let mut kkt = DMatrix::zeros(d + 1, d + 1);
    kkt.view_mut((0, 0), (d, d)).copy_from(&(xw.transpose() * &xw));
    if unstable {
        for i in 0..d {
            kkt[(i, i)] += REGRESSION_RIDGE;
        }
    }
    for i in 0..d {
        kkt[(i, d)] = 1.0;
        kkt[(d, i)] = 1.0;
    }
    let yw = DMatrix::from_fn(rows.len(), n_t, |i, ti| rows[i].1.sqrt() * values[&rows[i].0][ti]);
    let mut rhs = DMatrix::zeros(d + 1, n_t);
    rhs.view_mut((0, 0), (d, n_t)).copy_from(&(xw.transpose() * yw));
    for ti in 0..n_t {
        rhs[(d, ti)] = values[&full][ti];
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("regression system is singular (design rank {rank} of {d})")))?;

    let residuals: Values = values
        .iter()
        .map(|(&c, v)| {
            let mut r = v.clone();
            for (j, b) in basis.iter().enumerate() {
                if b.is_subset_of(c) {
                    for (ti, x) in r.iter_mut().enumerate() {
                        *x -= sol[(j, ti)];
                    }
                }
            }
            (c, r)
        })
        .collect();
    let correction = aggregate_ksii(&sample_sii(&sample, &residuals, k, n_t)?, k, p)?;
    let values = basis
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let curve = (0..n_t).map(|ti| sol[(j, ti)] + correction[b][ti]).collect();
            (*b, curve)
        })
        .collect();
    Ok(Estimate {
        values,
        diagnostics: Diagnostics {
            evaluations: coalitions.len(),
            exhaustive: sample.is_complete(),
            unstable,
            rank: Some(rank),
            basis_size: Some(d),
        },
    })
}

/// Shapley interaction indices of orders `1..=k` from contiguous windows of
/// the given permutations. A window `K` at position `i` is weighted by
/// `C(p,|K|)/(p−|K|+1)`, which makes the average unbiased. Stops before a
/// permutation would exceed `budget` distinct evaluations.
fn permutation_sii<I>(game: &dyn TimeGame, k: usize, budget: Option<usize>, perms: I) -> Result<(InteractionValues, usize)>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    let p = game.n_players();
    let n_t = game.n_times();
    let mut memo: Values = HashMap::new();
    let mut sums: InteractionValues = coalition_iter(p, k)?
        .filter(|c| !c.is_empty())
        .map(|c| (c, vec![0.0; n_t]))
        .collect();
    let mut n_perms = 0usize;
    for perm in perms {
        let prefixes: Vec<Coalition> = std::iter::once(Coalition::EMPTY)
            .chain(perm.iter().scan(Coalition::EMPTY, |acc, &j| {
                *acc = acc.insert(j);
                Some(*acc)
            }))
            .collect();
        let windows: Vec<(Coalition, Coalition)> = (1..=k)
            .flat_map(|s| (0..=p - s).map(move |i| (s, i)))
            .map(|(s, i)| {
                let kk = Coalition::from_indices(perm[i..i + s].iter().copied()).expect("valid index");
                (kk, prefixes[i])
            })
            .collect();
        let mut needed = HashSet::new();
        for (kk, m) in &windows {
            for l in kk.subsets() {
                let c = m.union(l);
                if !memo.contains_key(&c) {
                    needed.insert(c);
                }
            }
        }
        if let Some(b) = budget {
            if memo.len() + needed.len() > b {
                break;
            }
        }
        let needed: Vec<Coalition> = needed.into_iter().collect();
        memo.extend(evaluate(game, &needed)?);
        for (kk, m) in &windows {
            let acc = sums.get_mut(kk).expect("target present");
            let s = kk.len();
            for l in kk.subsets() {
                let sign = if (s - l.len()) % 2 == 0 { 1.0 } else { -1.0 };
                for (a, v) in acc.iter_mut().zip(&memo[&m.union(l)]) {
                    *a += sign * v;
                }
            }
        }
        n_perms += 1;
    }
    if n_perms == 0 {
        return Err(Error::invalid(format!(
            "budget {} is too small for a single permutation",
            budget.unwrap_or(0)
        )));
    }
    for (kk, acc) in sums.iter_mut() {
        let s = kk.len();
        let c = binom(p, s) / (p - s + 1) as f64 / n_perms as f64;
        acc.iter_mut().for_each(|v| *v *= c);
    }
    Ok((sums, memo.len()))
}
