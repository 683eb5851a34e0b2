//! Gauss–Hermite rules for expectations against the standard normal law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights with `Σ w_i f(z_i) ≈ E f(Z)`, `Z ~ N(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub const MIN_ORDER: usize = 64;
    pub const MAX_ORDER: usize = 160;

    /// The `n`-point Gauss–Hermite rule, `64 <= n <= 160`; beyond that the recurrence loses the outer roots.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if !(Self::MIN_ORDER..=Self::MAX_ORDER).contains(&n) {
            return Err(Error::Config(format!(
                "quadrature order must be in [{}, {}], got {n}",
                Self::MIN_ORDER,
                Self::MAX_ORDER
            )));
        }
        Ok(Self::gauss_hermite_any(n))
    }

    /// Newton iteration on the orthonormal Hermite recurrence (weight `e^{-x²}`),
    /// then rescaled to the standard normal.
    pub(crate) fn gauss_hermite_any(n: usize) -> Self {
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let total: f64 = w.iter().sum();
        let nodes = x.iter().rev().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().rev().map(|v| v / total).collect();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(x + sqrt(variance)·Z)`; exact `f(x)` when the variance is zero.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, variance: f64, x: f64) -> f64 {
        if variance <= 0.0 {
            return f(x);
        }
        let sd = variance.sqrt();
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(x + sd * z)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite_any(Self::MIN_ORDER)
    }
}

/// `E f(x + sqrt(variance)·Z)` under `rule`.
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, variance: f64, x: f64, rule: &QuadratureRule) -> f64 {
    rule.expect(f, variance, x)
}

/// Numerically stable `log cosh`.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_are_exact() {
        for n in [64, 100, 128, 160] {
            let r = QuadratureRule::gauss_hermite(n).unwrap();
            assert!(r.weights().iter().all(|&w| w > 0.0));
            assert!((r.expect(|_| 1.0, 1.0, 0.0) - 1.0).abs() < 1e-13);
            assert!((r.expect(|z| z * z, 1.0, 0.0) - 1.0).abs() < 1e-13);
            assert!((r.expect(|z| z.powi(4), 1.0, 0.0) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn order_bounds() {
        assert!(QuadratureRule::gauss_hermite(32).is_err());
        assert!(QuadratureRule::gauss_hermite(200).is_err());
    }

    #[test]
    fn odd_and_quadratic_integrands() {
        let r = QuadratureRule::default();
        assert!(gauss_expect(|z| z, 2.5, 0.0, &r).abs() < 1e-14);
        assert_relative_eq!(gauss_expect(|z| z * z, 2.5, 0.0, &r), 2.5, epsilon = 1e-13);
        assert_eq!(gauss_expect(|z| z * z, 0.0, 3.0, &r), 9.0);
    }

    #[test]
    fn cosh_matches_moment_generating_function() {
        let r = QuadratureRule::default();
        for (v, x) in [(0.5, 0.0), (1.0, 0.7), (2.0, -1.3)] {
            let got = gauss_expect(f64::cosh, v, x, &r);
            let want = x.cosh() * (v / 2.0_f64).exp();
            assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn log_cosh_is_stable() {
        assert_eq!(log_cosh(0.0), 0.0);
        assert_relative_eq!(log_cosh(0.5), 0.5f64.cosh().ln(), epsilon = 1e-15);
        assert_relative_eq!(log_cosh(800.0), 800.0 - std::f64::consts::LN_2);
        assert_eq!(log_cosh(-3.0), log_cosh(3.0));
    }
}
