//! Independent evaluation of `u_μ(0, h)` for atomic `μ` through the backward
//! Cole–Hopf recursion
//!
//! ```text
//! u_l(x) = (1/m_l) log E exp(m_l u_{l+1}(x + σ_l Z)),   u_{k+1} = log cosh,
//! ```
//!
//! with the plain average `E u_{l+1}(x + σ_l Z)` on pieces where `m_l = 0`.
//! Each level is tabulated on a shared spatial grid and interpolated with
//! cubic Lagrange stencils. Levels with large variance are split into
//! sub-levels (the recursion is a semigroup in the variance), which keeps the
//! Gauss–Hermite integrands well resolved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::measure::{DiscreteMeasure, Segment};
use crate::mixture::MixtureModel;
use crate::quadrature::{log_cosh, QuadratureRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    /// Spacing of the tabulation grid.
    pub dx: f64,
    /// Largest variance handled by one quadrature level.
    pub max_level_variance: f64,
    /// Extra half-width beyond `|h| + 6 sqrt(ξ'(1))`.
    pub margin: f64,
    pub execution: Execution,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { dx: 0.01, max_level_variance: 0.25, margin: 10.0, execution: Execution::Parallel }
    }
}

/// `u_μ(0, h)` with the default tabulation grid.
pub fn cascade_value(model: &MixtureModel, mu: &DiscreteMeasure, rule: &QuadratureRule) -> Result<f64> {
    cascade_value_with(model, mu, rule, &CascadeConfig::default())
}

pub fn cascade_value_with(
    model: &MixtureModel,
    mu: &DiscreteMeasure,
    rule: &QuadratureRule,
    cfg: &CascadeConfig,
) -> Result<f64> {
    cascade_segments_at(model, &mu.segments(), rule, cfg, model.h())
}

/// The replica-symmetric value `u_{δ_q}(0, h) = E log cosh(h + sqrt(ξ'(q) − ξ'(0)) Z) + ½(ξ'(1) − ξ'(q))`.
pub fn replica_symmetric_u(model: &MixtureModel, q: f64, rule: &QuadratureRule) -> f64 {
    let v = model.variance_between(0.0, q);
    rule.expect(log_cosh, v, model.h()) + 0.5 * model.variance_between(q, 1.0)
}

pub(crate) fn cascade_segments_at(
    model: &MixtureModel,
    segments: &[Segment],
    rule: &QuadratureRule,
    cfg: &CascadeConfig,
    x_eval: f64,
) -> Result<f64> {
    if !(cfg.dx > 0.0 && cfg.max_level_variance > 0.0) {
        return Err(Error::Config("cascade grid spacing and level variance must be positive".into()));
    }
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for seg in segments.iter().rev() {
        let v = model.variance_between(seg.start, seg.end);
        if v <= 0.0 {
            continue;
        }
        let n = (v / cfg.max_level_variance).ceil().max(1.0) as usize;
        levels.extend(std::iter::repeat_n((v / n as f64, seg.cdf), n));
    }
    if levels.is_empty() {
        return Ok(log_cosh(x_eval));
    }

    let half = x_eval.abs() + 6.0 * model.xi_prime(1.0).sqrt() + cfg.margin;
    let n_half = (half / cfg.dx).ceil() as usize;
    let grid = Table { x0: -(n_half as f64) * cfg.dx, dx: cfg.dx, values: Vec::new() };
    let xs: Vec<f64> = (0..=2 * n_half).map(|i| grid.x0 + i as f64 * cfg.dx).collect();
    let mut table = Table { values: xs.iter().map(|&x| log_cosh(x)).collect(), ..grid };

    let (last, inner) = levels.split_last().unwrap();
    for &(var, m) in inner {
        let values = map_indexed(cfg.execution, xs.len(), |i| level_value(&table, rule, var, m, xs[i]));
        table.values = values.into_iter().collect::<Result<Vec<_>>>()?;
    }
    level_value(&table, rule, last.0, last.1, x_eval)
}

fn level_value(table: &Table, rule: &QuadratureRule, var: f64, m: f64, x: f64) -> Result<f64> {
    let sd = var.sqrt();
    let nodes = rule.nodes();
    let weights = rule.weights();
    let value = if m == 0.0 {
        nodes.iter().zip(weights).map(|(z, w)| w * table.eval(x + sd * z)).sum::<f64>()
    } else {
        let mut shift = f64::NEG_INFINITY;
        let mut scratch = [0.0_f64; QuadratureRule::MAX_ORDER];
        for (slot, z) in scratch.iter_mut().zip(nodes) {
            *slot = m * table.eval(x + sd * z);
            shift = shift.max(*slot);
        }
        let sum: f64 = scratch.iter().zip(weights).map(|(a, w)| w * (a - shift).exp()).sum();
        (shift + sum.ln()) / m
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Oracle(format!("non-finite cascade level value at x = {x}")))
    }
}

/// Uniform tabulation with cubic Lagrange interpolation and slope-one
/// extrapolation outside the tabulated range.
struct Table {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
}

impl Table {
    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let x_end = self.x0 + (n - 1) as f64 * self.dx;
        if x <= self.x0 {
            return self.values[0] + (self.x0 - x);
        }
        if x >= x_end {
            return self.values[n - 1] + (x - x_end);
        }
        let r = (x - self.x0) / self.dx;
        let i = (r.floor() as usize).clamp(1, n - 3);
        let s = r - i as f64;
        let [a, b, c, d] = [self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]];
        // Lagrange basis on nodes -1, 0, 1, 2.
        let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        a * l0 + b * l1 + c * l2 + d * l3
    }
}
