//! Partition of the changed time `ŝ ∈ [0, s(0)]` into steps on which the
//! coefficient `m(ŝ) = μ[0, s⁻¹(ŝ)]` is constant.

use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;

#[derive(Clone, Debug)]
pub(crate) struct TimeGrid {
    /// Changed-time nodes, increasing from 0 to `s(0)`.
    pub s: Vec<f64>,
    /// Original times of the nodes (decreasing from 1 to 0).
    pub t: Vec<f64>,
    /// Coefficient on step `j`, i.e. on `(s[j], s[j+1])`.
    pub m: Vec<f64>,
}

impl TimeGrid {
    pub fn build(model: &MixtureModel, mu: &DiscreteMeasure, extra_knots: &[f64], dt_max: f64) -> Self {
        let horizon = model.horizon();
        if horizon <= 0.0 {
            return Self { s: vec![0.0], t: vec![1.0], m: Vec::new() };
        }
        // Knots as (changed time, original time), from t = 1 down to t = 0.
        let mut knots: Vec<(f64, f64)> = vec![(0.0, 1.0), (horizon, 0.0)];
        for &q in mu.atoms().iter().chain(extra_knots) {
            if q > 0.0 && q < 1.0 {
                knots.push((model.time_change_unchecked(q), q));
            }
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        knots.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-13 * horizon.max(1.0));

        let mut s = vec![0.0];
        let mut t = vec![1.0];
        let mut m = Vec::new();
        for w in knots.windows(2) {
            let ((s0, t0), (s1, t1)) = (w[0], w[1]);
            let len = s1 - s0;
            let n = (len / dt_max).ceil().max(1.0) as usize;
            let coeff = mu.cdf_unchecked(0.5 * (t0 + t1));
            for k in 1..=n {
                if k == n {
                    s.push(s1);
                    t.push(t1);
                } else {
                    let sk = s0 + len * k as f64 / n as f64;
                    s.push(sk);
                    t.push(model.time_change_inverse_unchecked(sk));
                }
                m.push(coeff);
            }
        }
        Self { s, t, m }
    }

    pub fn steps(&self) -> usize {
        self.m.len()
    }

    /// `∫₀^{s_j} m`, for every node.
    pub fn cumulative_m(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.s.len());
        out.push(0.0);
        for j in 0..self.steps() {
            out.push(out[j] + self.m[j] * (self.s[j + 1] - self.s[j]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knots_are_aligned_with_atoms() {
        let model = MixtureModel::sk(1.0, 0.0).unwrap();
        let mu = DiscreteMeasure::parse("0.3:0.4,0.75:1").unwrap();
        let g = TimeGrid::build(&model, &mu, &[0.5], 0.01);
        for q in [0.3, 0.5, 0.75] {
            assert!(g.t.contains(&q), "missing knot {q}");
        }
        assert_eq!(*g.s.last().unwrap(), 1.0);
        assert_eq!(*g.t.last().unwrap(), 0.0);
        assert!(g.s.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.01 + 1e-15));
        // m is μ[0,t] on the open step, so 1 for t > 0.75, 0.4 on (0.3, 0.75), 0 below.
        assert_eq!(g.m[0], 1.0);
        assert_eq!(*g.m.last().unwrap(), 0.0);
        let c = g.cumulative_m();
        assert!((c.last().unwrap() - (0.25 + 0.4 * 0.45)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_horizon() {
        let model = MixtureModel::parse("1:0.5", 0.0).unwrap();
        let g = TimeGrid::build(&model, &DiscreteMeasure::dirac(0.2).unwrap(), &[], 0.01);
        assert_eq!(g.steps(), 0);
    }
}
