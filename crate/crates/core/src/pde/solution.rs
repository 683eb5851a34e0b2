use std::io::Write;

use serde::{Deserialize, Serialize};

use super::time_grid::TimeGrid;
use super::{Backend, GridConfig, RawSlice, BOUNDARY_MARGIN};
use crate::error::{Error, Result};
use crate::format::sig17;
use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;
use crate::quadrature::log_cosh;

/// Solver bookkeeping. Picard fields stay zero for the finite-difference backend.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub backend: Backend,
    pub steps: usize,
    pub windows: usize,
    pub window_halvings: usize,
    pub max_iterations: usize,
    pub max_final_increment: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub u: f64,
    pub ux: f64,
    pub uxx: f64,
}

/// Extremes of the tabulated solution over the interior region `|x| ≤ region`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub region: f64,
    pub max_abs_ux: f64,
    pub min_uxx: f64,
    pub max_uxx: f64,
    pub uxx_upper_bound: f64,
    /// `max |u(t,x) − u(t,−x)|` over all nodes.
    pub evenness: f64,
    /// `max |u(1,x) − log cosh x|` over all nodes.
    pub terminal: f64,
    pub holds: bool,
}

/// Tabulated `u`, `u_x`, `u_xx` on `times × xs`, with `times` increasing from 0 to 1.
#[derive(Clone, Debug)]
pub struct PdeSolution {
    model: MixtureModel,
    measure: DiscreteMeasure,
    config: GridConfig,
    times: Vec<f64>,
    s_times: Vec<f64>,
    xs: Vec<f64>,
    u: Vec<f64>,
    ux: Vec<f64>,
    uxx: Vec<f64>,
    diagnostics: SolveDiagnostics,
}

impl PdeSolution {
    pub(crate) fn assemble(
        model: MixtureModel,
        measure: DiscreteMeasure,
        config: GridConfig,
        grid: &TimeGrid,
        xs: Vec<f64>,
        slices: Vec<RawSlice>,
        diagnostics: SolveDiagnostics,
    ) -> Self {
        debug_assert_eq!(slices.len(), grid.s.len());
        let nx = xs.len();
        let n = slices.len();
        let mut u = Vec::with_capacity(n * nx);
        let mut ux = Vec::with_capacity(n * nx);
        let mut uxx = Vec::with_capacity(n * nx);
        for slice in slices.into_iter().rev() {
            u.extend(slice.u);
            ux.extend(slice.ux);
            uxx.extend(slice.uxx);
        }
        let times = grid.t.iter().rev().copied().collect();
        let s_times = grid.s.iter().rev().copied().collect();
        Self { model, measure, config, times, s_times, xs, u, ux, uxx, diagnostics }
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.diagnostics
    }

    /// Original times of the stored slices, increasing.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Changed times of the stored slices (decreasing).
    pub fn changed_times(&self) -> &[f64] {
        &self.s_times
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    pub fn half_width(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Nominal accuracy of values read from the grid: `dx² + dt_max²`.
    pub fn tolerance(&self) -> f64 {
        let dx = self.dx();
        dx * dx + self.config.dt_max * self.config.dt_max
    }

    pub fn slice_u(&self, k: usize) -> &[f64] {
        let nx = self.xs.len();
        &self.u[k * nx..(k + 1) * nx]
    }

    pub fn slice_ux(&self, k: usize) -> &[f64] {
        let nx = self.xs.len();
        &self.ux[k * nx..(k + 1) * nx]
    }

    pub fn slice_uxx(&self, k: usize) -> &[f64] {
        let nx = self.xs.len();
        &self.uxx[k * nx..(k + 1) * nx]
    }

    /// Index of the stored slice at exactly this time, if any.
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t);
        (k < self.times.len() && self.times[k] == t).then_some(k)
    }

    /// Interpolated values on stored slice `k`. `x` is clamped to the grid.
    pub fn eval_slice(&self, k: usize, x: f64) -> PointValue {
        let l = self.half_width();
        let x = x.clamp(-l, l);
        let dx = self.dx();
        let nx = self.xs.len();
        let pos = (x + l) / dx;
        let (u, ux, uxx) = (self.slice_u(k), self.slice_ux(k), self.slice_uxx(k));
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            let i = nearest as usize;
            return PointValue { u: u[i], ux: ux[i], uxx: uxx[i] };
        }
        let i = (pos.floor() as usize).min(nx - 2);
        let r = pos - i as f64;
        PointValue {
            u: hermite(u[i], u[i + 1], ux[i], ux[i + 1], r, dx),
            ux: hermite(ux[i], ux[i + 1], uxx[i], uxx[i + 1], r, dx),
            uxx: lagrange4(uxx, i, r),
        }
    }

    /// Piecewise-cubic in `x`, linear in `t` between slices.
    pub fn evaluate_at(&self, t: f64, x: f64) -> Result<PointValue> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
        }
        let l = self.half_width();
        if !(x.abs() <= l) {
            return Err(Error::Domain(format!("x = {x} outside the grid [-{l}, {l}]")));
        }
        if self.times.len() == 1 {
            // Degenerate horizon: the solution is the terminal datum for all t.
            return Ok(self.eval_slice(0, x));
        }
        if let Some(k) = self.slice_index(t) {
            return Ok(self.eval_slice(k, x));
        }
        let k = self.times.partition_point(|&s| s < t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let a = self.eval_slice(k - 1, x);
        let b = self.eval_slice(k, x);
        Ok(PointValue {
            u: a.u + w * (b.u - a.u),
            ux: a.ux + w * (b.ux - a.ux),
            uxx: a.uxx + w * (b.uxx - a.uxx),
        })
    }

    /// Interior region used for pointwise invariant checks: the default
    /// domain `|h| + 6 sqrt(ξ'(1))` before the boundary margin is added.
    pub fn interior_half_width(&self) -> f64 {
        let l = self.half_width();
        if l - BOUNDARY_MARGIN > 0.5 * l {
            l - BOUNDARY_MARGIN
        } else {
            0.5 * l
        }
    }

    pub fn max_principle(&self) -> MaxPrincipleReport {
        let region = self.interior_half_width();
        let nx = self.xs.len();
        let dx = self.dx();
        let bound = 1.0 + 5.0 * dx * dx;
        let mut max_abs_ux = 0.0_f64;
        let mut min_uxx = f64::INFINITY;
        let mut max_uxx = f64::NEG_INFINITY;
        let mut evenness = 0.0_f64;
        let mut finite = true;
        for k in 0..self.times.len() {
            let (u, ux, uxx) = (self.slice_u(k), self.slice_ux(k), self.slice_uxx(k));
            for i in 0..nx {
                finite &= u[i].is_finite() && ux[i].is_finite() && uxx[i].is_finite();
                evenness = evenness.max((u[i] - u[nx - 1 - i]).abs());
                if self.xs[i].abs() <= region {
                    max_abs_ux = max_abs_ux.max(ux[i].abs());
                    min_uxx = min_uxx.min(uxx[i]);
                    max_uxx = max_uxx.max(uxx[i]);
                }
            }
        }
        let last = self.times.len() - 1;
        let terminal = self
            .slice_u(last)
            .iter()
            .zip(&self.xs)
            .map(|(u, &x)| (u - log_cosh(x)).abs())
            .fold(0.0, f64::max);
        let holds = finite && max_abs_ux < 1.0 && min_uxx > 0.0 && max_uxx <= bound;
        MaxPrincipleReport { region, max_abs_ux, min_uxx, max_uxx, uxx_upper_bound: bound, evenness, terminal, holds }
    }

    /// Dumps the grid as CSV `t,x,u,ux,uxx`, one row per node, slices in increasing `t`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,u,ux,uxx")?;
        let nx = self.xs.len();
        for (k, &t) in self.times.iter().enumerate() {
            let ts = sig17(t);
            for i in 0..nx {
                let j = k * nx + i;
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    ts,
                    sig17(self.xs[i]),
                    sig17(self.u[j]),
                    sig17(self.ux[j]),
                    sig17(self.uxx[j])
                )?;
            }
        }
        Ok(())
    }
}

/// Cubic Hermite interpolation on `[0, dx]` at fraction `r`.
fn hermite(f0: f64, f1: f64, d0: f64, d1: f64, r: f64, dx: f64) -> f64 {
    let r2 = r * r;
    let r3 = r2 * r;
    let h00 = 2.0 * r3 - 3.0 * r2 + 1.0;
    let h10 = r3 - 2.0 * r2 + r;
    let h01 = -2.0 * r3 + 3.0 * r2;
    let h11 = r3 - r2;
    h00 * f0 + h10 * dx * d0 + h01 * f1 + h11 * dx * d1
}

/// Four-point Lagrange interpolation between nodes `i` and `i + 1`.
fn lagrange4(f: &[f64], i: usize, r: f64) -> f64 {
    let n = f.len();
    let start = i.saturating_sub(1).min(n - 4);
    let y = r + (i - start) as f64;
    let mut acc = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (y - b as f64) / (a as f64 - b as f64);
            }
        }
        acc += w * f[start + a];
    }
    acc
}
