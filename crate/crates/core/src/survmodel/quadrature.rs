//! Adaptive Gauss–Kronrod (7/15) integration.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-12,
        }
    }
}

/// The 15 Kronrod nodes on `[a, b]`: pairs `c ∓ h·x_i` followed by the
/// midpoint.
pub(crate) fn gk15_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [c; 15];
    for i in 0..7 {
        out[2 * i] = c - h * XGK[i];
        out[2 * i + 1] = c + h * XGK[i];
    }
    out
}

/// Kronrod estimate and `|K − G|` error from integrand values at
/// [`gk15_nodes`] on an interval of half-width `h`.
pub(crate) fn gk15_apply(f: &[f64; 15], h: f64) -> (f64, f64) {
    let mut kronrod = WGK[7] * f[14];
    let mut gauss = WG[3] * f[14];
    for i in 0..7 {
        let s = f[2 * i] + f[2 * i + 1];
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let nodes = gk15_nodes(a, b);
    let vals = nodes.map(&mut *f);
    gk15_apply(&vals, 0.5 * (b - a))
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate satisfies `tol`. Returns `(value, error_estimate)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while !(err <= tol.abs.max(tol.rel * total.abs())) {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature { residual: err });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { residual: err });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, v0, e0) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    // re-sum to shed drift from the incremental updates
    let total: f64 = parts.iter().map(|p| p.2).sum();
    let err: f64 = parts.iter().map(|p| p.3).sum();
    if !total.is_finite() || !err.is_finite() {
        return Err(Error::Quadrature { residual: err });
    }
    Ok((total, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let (v, _) = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((v - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn smooth_transcendental() {
        let (v, e) = integrate(f64::exp, 0.0, 5.0, Tolerance::default()).unwrap();
        assert!((v - (5f64.exp() - 1.0)).abs() < 1e-10);
        assert!(e <= 1e-10);
    }

    #[test]
    fn power_of_one_plus_u() {
        // ∫_0^70 (1+u)^b du = ((71)^{b+1} - 1) / (b+1)
        for b in [-2.5, -0.7, 0.3, 1.8] {
            let (v, _) = integrate(|u| (1.0 + u).powf(b), 0.0, 70.0, Tolerance::default()).unwrap();
            let exact = (71f64.powf(b + 1.0) - 1.0) / (b + 1.0);
            assert!((v - exact).abs() <= 1e-10f64.max(1e-12 * exact.abs()), "b={b}");
        }
    }

    #[test]
    fn empty_interval() {
        assert_eq!(integrate(|_| 1.0, 3.0, 3.0, Tolerance::default()).unwrap().0, 0.0);
    }

    #[test]
    fn reports_failure_on_non_finite_integrand() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, Tolerance::default());
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
