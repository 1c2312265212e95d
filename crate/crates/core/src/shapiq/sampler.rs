use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::coalition::{binom, Coalition, MAX_PLAYERS};
use crate::error::{Error, Result};

/// A budgeted coalition sample. Size strata are enumerated completely from
/// the outside in (`∅` and `P` first, then sizes `1` and `p−1`, ...) while
/// the budget allows; the rest of the budget is spent on draws with
/// replacement from the remaining sizes, with size probabilities
/// proportional to `1/(s(p−s))` and a uniform coalition within the size.
#[derive(Debug, Clone)]
pub struct CoalitionSample {
    p: usize,
    enumerated_sizes: Vec<bool>,
    enumerated: Vec<Coalition>,
    sampled: BTreeMap<Coalition, u32>,
    n_draws: usize,
    size_probs: Vec<f64>,
}

impl CoalitionSample {
    pub fn draw<R: Rng + ?Sized>(p: usize, budget: usize, rng: &mut R) -> Result<Self> {
        if p == 0 || p > MAX_PLAYERS {
            return Err(Error::invalid(format!("player count must be in 1..={MAX_PLAYERS}, got {p}")));
        }
        if budget < 2 {
            return Err(Error::invalid(format!("budget must be at least 2, got {budget}")));
        }
        let mut enumerated_sizes = vec![false; p + 1];
        enumerated_sizes[0] = true;
        enumerated_sizes[p] = true;
        let mut remaining = (budget - 2) as f64;
        for s in 1..=p / 2 {
            let cost = if 2 * s == p { binom(p, s) } else { 2.0 * binom(p, s) };
            if cost > remaining {
                break;
            }
            remaining -= cost;
            enumerated_sizes[s] = true;
            enumerated_sizes[p - s] = true;
        }
        let mut enumerated = Vec::new();
        for (s, &on) in enumerated_sizes.iter().enumerate() {
            if on {
                enumerated.extend(coalitions_of_size(p, s));
            }
        }

        let mut size_probs = vec![0.0; p + 1];
        for s in 1..p {
            if !enumerated_sizes[s] {
                size_probs[s] = 1.0 / (s * (p - s)) as f64;
            }
        }
        let total: f64 = size_probs.iter().sum();
        let mut sampled = BTreeMap::new();
        let mut n_draws = 0;
        if total > 0.0 {
            size_probs.iter_mut().for_each(|q| *q /= total);
            n_draws = remaining as usize;
            let sizes = WeightedIndex::new(&size_probs).map_err(|e| Error::invalid(e.to_string()))?;
            for _ in 0..n_draws {
                let s = sizes.sample(rng);
                let c = Coalition::from_indices(rand::seq::index::sample(rng, p, s).into_iter())?;
                *sampled.entry(c).or_insert(0) += 1;
            }
        }
        Ok(CoalitionSample {
            p,
            enumerated_sizes,
            enumerated,
            sampled,
            n_draws,
            size_probs,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// True when every coalition was enumerated.
    pub fn is_complete(&self) -> bool {
        self.enumerated_sizes.iter().all(|&b| b)
    }

    pub fn is_size_enumerated(&self, s: usize) -> bool {
        self.enumerated_sizes[s]
    }

    /// Coalitions of the fully enumerated strata, including `∅` and `P`.
    pub fn enumerated(&self) -> &[Coalition] {
        &self.enumerated
    }

    /// Distinct sampled coalitions with their draw counts.
    pub fn sampled(&self) -> &BTreeMap<Coalition, u32> {
        &self.sampled
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    /// Probability that a single draw returns `c`.
    pub fn draw_probability(&self, c: Coalition) -> f64 {
        let s = c.len();
        self.size_probs[s] / binom(self.p, s)
    }

    /// Every distinct coalition that needs a value.
    pub fn coalitions(&self) -> impl Iterator<Item = Coalition> + '_ {
        self.enumerated.iter().copied().chain(self.sampled.keys().copied())
    }

    pub fn n_evaluations(&self) -> usize {
        self.enumerated.len() + self.sampled.len()
    }

    /// Sum of the Shapley kernel `(p−1)/(C(p,s)s(p−s))` over the coalitions
    /// of the sampled strata.
    pub fn sampled_kernel_mass(&self) -> f64 {
        (1..self.p)
            .filter(|&s| !self.enumerated_sizes[s])
            .map(|s| (self.p - 1) as f64 / (s * (self.p - s)) as f64)
            .sum()
    }
}

/// All coalitions of size `s` over `p` players (Gosper's hack).
pub fn coalitions_of_size(p: usize, s: usize) -> Vec<Coalition> {
    if s > p {
        return Vec::new();
    }
    if s == 0 {
        return vec![Coalition::EMPTY];
    }
    let limit = 1u128 << p;
    let mut out = Vec::with_capacity(binom(p, s) as usize);
    let mut cur = (1u128 << s) - 1;
    while cur < limit {
        out.push(Coalition::from_bits(cur as u64));
        let c = cur & cur.wrapping_neg();
        let r = cur + c;
        cur = (((r ^ cur) >> 2) / c) | r;
    }
    out
}
