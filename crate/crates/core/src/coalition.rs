//! Feature coalitions as fixed-width bit sets.
//!
//! Bit `j` stands for feature `j` (0-based). Coalitions are rendered with
//! sorted 1-based indices joined by `+`, so `{0, 2}` prints as `1+3`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest feature count supported by the exact (full power set) path.
pub const MAX_EXACT_PLAYERS: usize = 30;
/// Largest feature count supported by the sampling approximators.
pub const MAX_PLAYERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub const fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    /// The grand coalition over `p` features.
    pub fn full(p: usize) -> Self {
        debug_assert!(p <= MAX_PLAYERS);
        if p == 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << p) - 1)
        }
    }

    pub fn singleton(j: usize) -> Self {
        debug_assert!(j < MAX_PLAYERS);
        Coalition(1u64 << j)
    }

    /// Builds a coalition from 0-based feature indices.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
        let mut bits = 0u64;
        for j in indices {
            if j >= MAX_PLAYERS {
                return Err(Error::invalid(format!("feature index {j} out of range")));
            }
            bits |= 1u64 << j;
        }
        Ok(Coalition(bits))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, j: usize) -> bool {
        j < MAX_PLAYERS && self.0 & (1u64 << j) != 0
    }

    pub fn insert(self, j: usize) -> Self {
        Coalition(self.0 | (1u64 << j))
    }

    pub fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    pub fn intersection(self, other: Coalition) -> Self {
        Coalition(self.0 & other.0)
    }

    pub fn difference(self, other: Coalition) -> Self {
        Coalition(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    /// True when every member index is below `p`.
    pub fn fits(self, p: usize) -> bool {
        p >= MAX_PLAYERS || self.0 >> p == 0
    }

    /// Member indices in ascending order.
    pub fn members(self) -> Members {
        Members(self.0)
    }

    /// All subsets of `self`, including the empty set and `self`.
    pub fn subsets(self) -> Subsets {
        Subsets {
            mask: self.0,
            next: Some(0),
        }
    }
}

pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let j = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(j)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Submask enumeration in ascending bit order.
pub struct Subsets {
    mask: u64,
    next: Option<u64>,
}

impl Iterator for Subsets {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let cur = self.next?;
        self.next = if cur == self.mask {
            None
        } else {
            // next submask: increment within the mask's bit positions
            Some(((cur | !self.mask).wrapping_add(1)) & self.mask)
        };
        Some(Coalition(cur))
    }
}

impl Ord for Coalition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Coalition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for j in self.members() {
            if !first {
                f.write_str("+")?;
            }
            write!(f, "{}", j + 1)?;
            first = false;
        }
        Ok(())
    }
}

impl serde::Serialize for Coalition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Coalition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Coalition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Coalition::EMPTY);
        }
        let mut bits = 0u64;
        for part in s.split('+') {
            let idx: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad coalition member {part:?} in {s:?}")))?;
            if idx == 0 || idx > MAX_PLAYERS {
                return Err(Error::Parse(format!(
                    "coalition member {idx} out of range in {s:?}"
                )));
            }
            bits |= 1u64 << (idx - 1);
        }
        Ok(Coalition(bits))
    }
}

/// Every coalition over `p` features with at most `max_order` members,
/// ordered by size and then by bit pattern.
pub fn coalition_iter(p: usize, max_order: usize) -> Result<CoalitionIter> {
    if p > MAX_PLAYERS {
        return Err(Error::invalid(format!(
            "p = {p} exceeds the supported maximum of {MAX_PLAYERS}"
        )));
    }
    if max_order > p {
        return Err(Error::invalid(format!("max_order {max_order} > p = {p}")));
    }
    Ok(CoalitionIter {
        p,
        max_order,
        size: 0,
        current: Some(0),
    })
}

pub struct CoalitionIter {
    p: usize,
    max_order: usize,
    size: usize,
    current: Option<u128>,
}

impl Iterator for CoalitionIter {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        loop {
            if self.size > self.max_order {
                return None;
            }
            if let Some(cur) = self.current {
                // Gosper's hack; u128 keeps the carry for p = 64.
                let limit = 1u128 << self.p;
                self.current = if cur == 0 {
                    None
                } else {
                    let c = cur & cur.wrapping_neg();
                    let r = cur + c;
                    let next = (((r ^ cur) >> 2) / c) | r;
                    (next < limit).then_some(next)
                };
                return Some(Coalition(cur as u64));
            }
            self.size += 1;
            if self.size > self.max_order {
                return None;
            }
            self.current = Some((1u128 << self.size) - 1);
        }
    }
}

/// Binomial coefficient as `f64`.
pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Number of coalitions with at most `k` members over `p` features.
pub fn count_up_to(p: usize, k: usize) -> usize {
    (0..=k.min(p)).map(|s| binom(p, s) as usize).sum()
}
