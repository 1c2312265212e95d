use std::collections::BTreeMap;

use crate::coalition::{binom, coalition_iter, Coalition};
use crate::error::{Error, Result};
use crate::game::ValueTable;

/// Per-coalition curves, keyed in canonical order.
pub type InteractionValues = BTreeMap<Coalition, Vec<f64>>;

/// Möbius coefficients `m_S(t)` of a complete value table.
#[derive(Debug, Clone, PartialEq)]
pub struct MoebiusCoefficients {
    p: usize,
    n_times: usize,
    values: Vec<f64>,
}

impl MoebiusCoefficients {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn curve(&self, s: Coalition) -> &[f64] {
        let i = s.bits() as usize * self.n_times;
        &self.values[i..i + self.n_times]
    }

    /// `Σ_{S⊆M} m_S`, which recovers `ν(M)`.
    pub fn reconstruct(&self, m: Coalition) -> Vec<f64> {
        let mut out = vec![0.0; self.n_times];
        for s in m.subsets() {
            for (o, v) in out.iter_mut().zip(self.curve(s)) {
                *o += v;
            }
        }
        out
    }

    /// Coefficients of every coalition with `1 ≤ |S| ≤ max_order`.
    pub fn up_to(&self, max_order: usize) -> InteractionValues {
        (1..1u64 << self.p)
            .map(Coalition::from_bits)
            .filter(|s| s.len() <= max_order)
            .map(|s| (s, self.curve(s).to_vec()))
            .collect()
    }
}

/// In-place inverse subset-sum transform, `O(p·2^p)` per timepoint.
pub fn moebius_transform(table: &ValueTable) -> MoebiusCoefficients {
    let (p, n_t) = (table.p(), table.n_times());
    let mut v = table.raw().to_vec();
    for i in 0..p {
        let bit = 1usize << i;
        for mask in 0..1usize << p {
            if mask & bit != 0 {
                let (lo, hi) = v.split_at_mut(mask * n_t);
                let src = &lo[(mask ^ bit) * n_t..(mask ^ bit) * n_t + n_t];
                for (d, s) in hi[..n_t].iter_mut().zip(src) {
                    *d -= s;
                }
            }
        }
    }
    MoebiusCoefficients {
        p,
        n_times: n_t,
        values: v,
    }
}

/// `Δ_K(M)(t) = Σ_{L⊆K} (−1)^{|K|−|L|} ν(t|M ∪ L)` at every timepoint.
pub fn discrete_derivative(table: &ValueTable, k: Coalition, m: Coalition) -> Result<Vec<f64>> {
    if !k.is_disjoint(m) {
        return Err(Error::invalid(format!("K = {{{k}}} and M = {{{m}}} overlap")));
    }
    let full = Coalition::full(table.p());
    if !k.union(m).is_subset_of(full) {
        return Err(Error::invalid("coalition out of range"));
    }
    let mut out = vec![0.0; table.n_times()];
    derivative_into(table, k, m, &mut out);
    Ok(out)
}

fn derivative_into(table: &ValueTable, k: Coalition, m: Coalition, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let s = k.len();
    for l in k.subsets() {
        let sign = if (s - l.len()) % 2 == 0 { 1.0 } else { -1.0 };
        for (o, v) in out.iter_mut().zip(table.curve(m.union(l))) {
            *o += sign * v;
        }
    }
}

/// Weight of `Δ_K(M)` in the Shapley interaction index for `|K| = s`,
/// `|M| = m` among `p` players.
pub fn sii_weight(p: usize, s: usize, m: usize) -> f64 {
    1.0 / ((p - s + 1) as f64 * binom(p - s, m))
}

/// Shapley interaction index of every coalition with `1 ≤ |K| ≤ k`; each
/// order uses its own weight normalization.
pub fn exact_sii(table: &ValueTable, k: usize) -> Result<InteractionValues> {
    let p = table.p();
    if k == 0 || k > p {
        return Err(Error::invalid(format!("order must be in 1..={p}, got {k}")));
    }
    let n_t = table.n_times();
    let full = Coalition::full(p);
    let mut out = InteractionValues::new();
    let mut delta = vec![0.0; n_t];
    for kk in coalition_iter(p, k)?.filter(|c| !c.is_empty()) {
        let s = kk.len();
        let weights: Vec<f64> = (0..=p - s).map(|m| sii_weight(p, s, m)).collect();
        let mut acc = vec![0.0; n_t];
        for m in full.difference(kk).subsets() {
            derivative_into(table, kk, m, &mut delta);
            let w = weights[m.len()];
            for (a, d) in acc.iter_mut().zip(&delta) {
                *a += w * d;
            }
        }
        out.insert(kk, acc);
    }
    Ok(out)
}

/// Bernoulli numbers `B_0..=B_n` with `B_1 = −1/2`.
pub fn bernoulli_numbers(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    for m in 1..=n {
        let s: f64 = (0..m).map(|j| binom(m + 1, j) * b[j]).sum();
        b[m] = -s / (m + 1) as f64;
    }
    b
}

/// Aggregates Shapley interaction indices of orders `1..=k` into k-SII
/// values: the order-`k` values are kept, and lower orders absorb the
/// higher-order indices with Bernoulli-number weights, so the result sums to
/// `ν(P)`.
pub fn aggregate_ksii(sii: &InteractionValues, k: usize, p: usize) -> Result<InteractionValues> {
    if k == 0 || k > p {
        return Err(Error::invalid(format!("order must be in 1..={p}, got {k}")));
    }
    let n_t = sii.values().next().map(Vec::len).unwrap_or(0);
    for c in coalition_iter(p, k)?.filter(|c| !c.is_empty()) {
        match sii.get(&c) {
            Some(v) if v.len() == n_t => {}
            Some(v) => {
                return Err(Error::DimensionMismatch {
                    expected: n_t,
                    got: v.len(),
                })
            }
            None => {
                return Err(Error::invalid(format!(
                    "interaction index for {{{c}}} (order {}) is missing",
                    c.len()
                )))
            }
        }
    }
    let bern = bernoulli_numbers(k);
    let mut phi: InteractionValues = sii
        .iter()
        .filter(|(c, _)| c.len() == 1)
        .map(|(c, v)| (*c, v.clone()))
        .collect();
    for n in 2..=k {
        let order_n: Vec<(Coalition, &Vec<f64>)> =
            sii.iter().filter(|(c, _)| c.len() == n).map(|(c, v)| (*c, v)).collect();
        for (s, curve) in phi.iter_mut() {
            let w = bern[n - s.len()];
            if w == 0.0 {
                continue;
            }
            for (kk, v) in &order_n {
                if s.is_subset_of(*kk) {
                    for (c, x) in curve.iter_mut().zip(v.iter()) {
                        *c += w * x;
                    }
                }
            }
        }
        for (kk, v) in order_n {
            phi.insert(kk, v.clone());
        }
    }
    Ok(phi)
}

/// Exact k-SII values from a complete table.
pub fn exact_ksii(table: &ValueTable, k: usize) -> Result<InteractionValues> {
    aggregate_ksii(&exact_sii(table, k)?, k, table.p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn table(p: usize, f: impl Fn(Coalition) -> f64) -> ValueTable {
        ValueTable::from_fn(p, 1, |c| vec![f(c)]).unwrap()
    }

    fn two_player() -> ValueTable {
        table(2, |c| [0.0, 1.0, 2.0, 4.0][c.bits() as usize])
    }

    fn random_table(p: usize, n_t: usize, seed: u64) -> ValueTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ValueTable::from_fn(p, n_t, |_| (0..n_t).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Shapley values by enumerating every permutation.
    fn permutation_shapley(t: &ValueTable) -> Vec<f64> {
        fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let x = rest.remove(i);
                for mut p in perms(rest) {
                    p.insert(0, x);
                    out.push(p);
                }
            }
            out
        }
        let p = t.p();
        let all = perms((0..p).collect());
        let mut phi = vec![0.0; p];
        for perm in &all {
            let mut pre = Coalition::EMPTY;
            for &j in perm {
                phi[j] += t.get(pre.insert(j), 0) - t.get(pre, 0);
                pre = pre.insert(j);
            }
        }
        phi.iter().map(|v| v / all.len() as f64).collect()
    }

    #[test]
    fn moebius_two_player() {
        let m = moebius_transform(&two_player());
        assert_eq!(m.curve(Coalition::from_bits(3)), &[1.0]);
        assert_eq!(m.curve(Coalition::from_bits(1)), &[1.0]);
        assert_eq!(m.curve(Coalition::from_bits(2)), &[2.0]);
    }

    #[test]
    fn moebius_matches_naive_double_loop() {
        let t = random_table(3, 2, 1);
        let m = moebius_transform(&t);
        for s in 0..8u64 {
            let s = Coalition::from_bits(s);
            for ti in 0..2 {
                let naive: f64 = s
                    .subsets()
                    .map(|l| {
                        let sign = if (s.len() - l.len()) % 2 == 0 { 1.0 } else { -1.0 };
                        sign * t.get(l, ti)
                    })
                    .sum();
                assert!((m.curve(s)[ti] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn additive_game_has_no_interactions() {
        let c = [0.5, -1.0, 2.0, 0.25];
        let t = table(4, |s| s.members().map(|j| c[j]).sum());
        let m = moebius_transform(&t);
        for bits in 0..16u64 {
            let s = Coalition::from_bits(bits);
            if s.len() >= 2 {
                assert!(m.curve(s)[0].abs() < 1e-15);
                for other in Coalition::full(4).difference(s).subsets() {
                    assert!(discrete_derivative(&t, s, other).unwrap()[0].abs() < 1e-15);
                }
            }
        }
        for k in 1..=4 {
            let phi = exact_ksii(&t, k).unwrap();
            for (s, v) in &phi {
                let expect = if s.len() == 1 { c[s.members().next().unwrap()] } else { 0.0 };
                assert!((v[0] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let t = two_player();
        let one = Coalition::singleton(0);
        assert_eq!(discrete_derivative(&t, one, Coalition::EMPTY).unwrap(), vec![1.0]);
        assert_eq!(discrete_derivative(&t, Coalition::full(2), Coalition::EMPTY).unwrap(), vec![1.0]);
        assert!(discrete_derivative(&t, one, one).is_err());
    }

    #[test]
    fn sii_two_player() {
        let s = exact_sii(&two_player(), 2).unwrap();
        assert!((s[&Coalition::singleton(0)][0] - 1.5).abs() < 1e-15);
        assert!((s[&Coalition::full(2)][0] - 1.0).abs() < 1e-15);
        assert!(exact_sii(&two_player(), 3).is_err());
    }

    #[test]
    fn dummy_player_gets_nothing() {
        let t = table(4, |s| {
            let x = |j| if s.contains(j) { 1.0 } else { 0.0 };
            x(0) * x(1) * 3.0 - x(2) + 0.5 * x(0) * x(1) * x(2)
        });
        for k in 1..=4 {
            for (s, v) in exact_sii(&t, k).unwrap() {
                if s.contains(3) {
                    assert!(v[0].abs() < 1e-15, "{s}");
                }
            }
        }
    }

    #[test]
    fn bernoulli() {
        let b = bernoulli_numbers(6);
        let expect = [1.0, -0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0, 0.0, 1.0 / 42.0];
        for (x, y) in b.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn sii_equals_moebius_superset_formula() {
        let t = random_table(5, 3, 4);
        let m = moebius_transform(&t);
        let s = exact_sii(&t, 5).unwrap();
        for (k, v) in &s {
            for ti in 0..3 {
                let oracle: f64 = (0..32u64)
                    .map(Coalition::from_bits)
                    .filter(|tt| k.is_subset_of(*tt))
                    .map(|tt| m.curve(tt)[ti] / (tt.len() - k.len() + 1) as f64)
                    .sum();
                assert!((v[ti] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_orders_rejected() {
        let t = random_table(3, 1, 2);
        let mut s = exact_sii(&t, 2).unwrap();
        s.remove(&Coalition::from_bits(3));
        assert!(aggregate_ksii(&s, 2, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn full_order_ksii_is_moebius(p in 1usize..=6, seed in any::<u64>()) {
            let t = random_table(p, 2, seed);
            let m = moebius_transform(&t);
            let phi = exact_ksii(&t, p).unwrap();
            for (s, v) in &phi {
                for (a, b) in v.iter().zip(m.curve(*s)) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn first_order_is_permutation_shapley(p in 1usize..=4, seed in any::<u64>()) {
            let t = random_table(p, 1, seed);
            let phi = exact_ksii(&t, 1).unwrap();
            let oracle = permutation_shapley(&t);
            for j in 0..p {
                prop_assert!((phi[&Coalition::singleton(j)][0] - oracle[j]).abs() < 1e-10);
            }
        }

        #[test]
        fn ksii_is_efficient_and_keeps_top_order(p in 2usize..=6, k in 1usize..=6, seed in any::<u64>()) {
            let k = k.min(p);
            let t = random_table(p, 2, seed);
            let sii = exact_sii(&t, k).unwrap();
            let phi = aggregate_ksii(&sii, k, p).unwrap();
            for ti in 0..2 {
                let total: f64 = phi.values().map(|v| v[ti]).sum();
                prop_assert!((total - t.get(Coalition::full(p), ti)).abs() < 1e-10);
            }
            for (s, v) in &phi {
                if s.len() == k {
                    prop_assert_eq!(v, &sii[s]);
                }
            }
        }

        #[test]
        fn reconstruction(p in 1usize..=6, seed in any::<u64>()) {
            let t = random_table(p, 2, seed);
            let m = moebius_transform(&t);
            for bits in 0..1u64 << p {
                let c = Coalition::from_bits(bits);
                for (a, b) in m.reconstruct(c).iter().zip(t.curve(c)) {
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let t1 = random_table(4, 1, seed);
            let t2 = random_table(4, 1, seed ^ 0xabc);
            let mix = ValueTable::from_fn(4, 1, |c| vec![a * t1.get(c, 0) + b * t2.get(c, 0)]).unwrap();
            let (p1, p2, pm) = (exact_ksii(&t1, 2).unwrap(), exact_ksii(&t2, 2).unwrap(), exact_ksii(&mix, 2).unwrap());
            for (s, v) in &pm {
                prop_assert!((v[0] - (a * p1[s][0] + b * p2[s][0])).abs() < 1e-10);
            }
        }
    }
}
