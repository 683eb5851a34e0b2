//! Windowed Picard iteration of the Duhamel form
//! `u(ŝ) = e^{ŝΔ} g + ∫₀^ŝ e^{(ŝ−σ)Δ} m(σ) u_x²(σ) dσ`.
//!
//! The linear growth of `u` is carried by `r(ŝ, x) + ∫₀^ŝ m − log 2`, where
//! `r(ŝ, x) = E|x + sqrt(1 + 2ŝ) Z|` solves the heat equation in closed form.
//! The remainder `w = u − r − ∫m + log 2` decays at infinity and satisfies
//! `w = e^{ŝΔ} w₀ + ∫ e^{(ŝ−σ)Δ} m (u_x² − 1) dσ`, so the heat semigroup is
//! applied to decaying data as a circular Gaussian convolution (Fourier
//! multiplier `e^{−δk²}`). On a step `[ŝ_j, ŝ_{j+1}]` the Duhamel integral is
//! taken by the exponential midpoint rule
//!
//! ```text
//! w_{j+1} = H_δ w_j + ½δ m_j H_{δ/2} (G_j + G_{j+1}),   G = u_x² − 1,
//! ```
//!
//! so the implicit endpoint term is smoothed and the sweep contracts for
//! short windows independently of the spatial step.
//!
//! Each sweep of a window evaluates the map `A` on the previous iterate.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::solution::SolveDiagnostics;
use super::time_grid::TimeGrid;
use super::{Backend, GridConfig, RawSlice};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;
use crate::quadrature::log_cosh;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardSettings {
    /// Stop a window once the sup-norm increment falls below this.
    pub tol: f64,
    /// Iteration cap per window.
    pub max_iters: usize,
    /// Initial window length in time steps; halved while iterates fail to contract.
    pub window_steps: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self { tol: 1e-12, max_iters: 60, window_steps: 16 }
    }
}

impl PicardSettings {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) || self.max_iters == 0 || self.window_steps == 0 {
            return Err(Error::Config("Picard settings need tol >= 0, max_iters >= 1, window_steps >= 1".into()));
        }
        Ok(())
    }
}

/// Sup-norm increments `‖u^{n+1} − u^n‖_∞` of one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowTrace {
    /// Changed-time interval covered by the window.
    pub s_start: f64,
    pub s_end: f64,
    pub increments: Vec<f64>,
}

/// Runs exactly `n_iters` Picard sweeps on every window of the configured
/// schedule and reports the increments.
pub fn picard_iterate(
    model: &MixtureModel,
    mu: &DiscreteMeasure,
    cfg: &GridConfig,
    n_iters: usize,
) -> Result<Vec<WindowTrace>> {
    if cfg.backend != Backend::DuhamelPicard {
        return Err(Error::Config("picard_iterate requires the duhamel_picard backend".into()));
    }
    cfg.validate()?;
    if n_iters == 0 {
        return Err(Error::Config("n_iters must be >= 1".into()));
    }
    let grid = TimeGrid::build(model, mu, &cfg.extra_knots, cfg.dt_max);
    let xs = super::nodes(cfg);
    let settings = PicardSettings { tol: 0.0, max_iters: n_iters, ..cfg.picard.clone() };
    let mut traces = Vec::new();
    solve(&grid, &xs, &settings, Some(&mut traces))?;
    Ok(traces)
}

/// With `traces` the schedule is fixed and every window runs `max_iters`
/// sweeps; otherwise windows stop at `tol` and are halved when they stall.
pub(crate) fn solve(
    grid: &TimeGrid,
    xs: &[f64],
    settings: &PicardSettings,
    mut traces: Option<&mut Vec<WindowTrace>>,
) -> Result<(Vec<RawSlice>, SolveDiagnostics)> {
    let fixed = traces.is_some();
    let n_periodic = xs.len() - 1;
    let dx = xs[1] - xs[0];
    let mut spec = Spectral::new(n_periodic, dx);
    let px = &xs[..n_periodic];
    let cumulative = grid.cumulative_m();

    let mut diag = SolveDiagnostics { backend: Backend::DuhamelPicard, steps: grid.steps(), ..Default::default() };

    // Remainder and its gradient at every accepted node.
    let w0: Vec<f64> = px
        .iter()
        .map(|&x| log_cosh(x) + std::f64::consts::LN_2 - Reference::at(0.0).value(x))
        .collect();
    let mut w_nodes: Vec<Vec<f64>> = vec![w0];
    let mut wx_node = spec.derivative(&w_nodes[0]);

    let mut j0 = 0;
    while j0 < grid.steps() {
        let mut len = settings.window_steps.min(grid.steps() - j0);
        loop {
            let j1 = j0 + len;
            let outcome = run_window(grid, px, &mut spec, settings, fixed, j0, j1, &w_nodes[j0], &wx_node)?;
            let stalled = !fixed && !outcome.converged;
            if stalled && len > 1 {
                diag.window_halvings += 1;
                len = len.div_ceil(2);
                continue;
            }
            if stalled {
                return Err(Error::Solver {
                    message: format!("Picard iteration did not converge on a single step at s = {}", grid.s[j0]),
                    residual: *outcome.increments.last().unwrap_or(&f64::NAN),
                });
            }
            diag.windows += 1;
            diag.max_iterations = diag.max_iterations.max(outcome.increments.len());
            let last = *outcome.increments.last().unwrap_or(&0.0);
            diag.max_final_increment = diag.max_final_increment.max(last);
            if let Some(t) = traces.as_deref_mut() {
                t.push(WindowTrace { s_start: grid.s[j0], s_end: grid.s[j1], increments: outcome.increments });
            }
            wx_node = outcome.wx_last;
            w_nodes.extend(outcome.w.into_iter().skip(1));
            j0 = j1;
            break;
        }
    }

    let slices = w_nodes
        .iter()
        .enumerate()
        .map(|(j, w)| {
            if j == 0 {
                super::terminal_slice(xs)
            } else {
                assemble_slice(&mut spec, xs, grid.s[j], cumulative[j], w)
            }
        })
        .collect();
    Ok((slices, diag))
}

struct WindowOutcome {
    /// Remainder at window nodes `j0..=j1`.
    w: Vec<Vec<f64>>,
    wx_last: Vec<f64>,
    increments: Vec<f64>,
    converged: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_window(
    grid: &TimeGrid,
    px: &[f64],
    spec: &mut Spectral,
    settings: &PicardSettings,
    fixed: bool,
    j0: usize,
    j1: usize,
    w_start: &[f64],
    wx_start: &[f64],
) -> Result<WindowOutcome> {
    let k = j1 - j0;
    let refs: Vec<Reference> = (j0..=j1).map(|j| Reference::at(grid.s[j])).collect();
    let gap = |r: &Reference, wx: &[f64]| -> Vec<f64> {
        px.iter()
            .zip(wx)
            .map(|(&x, &d)| {
                let ux = r.slope(x) + d;
                ux * ux - 1.0
            })
            .collect()
    };

    // Initial iterate: the remainder frozen at the window start.
    let mut w: Vec<Vec<f64>> = vec![w_start.to_vec(); k + 1];
    let mut g: Vec<Vec<f64>> = refs.iter().map(|r| gap(r, wx_start)).collect();
    let mut wx_last = wx_start.to_vec();
    let mut increments = Vec::new();
    let mut converged = false;

    for _ in 0..settings.max_iters {
        let mut next = Vec::with_capacity(k + 1);
        next.push(w_start.to_vec());
        for step in 0..k {
            let j = j0 + step;
            let delta = grid.s[j + 1] - grid.s[j];
            let forcing: Vec<f64> = g[step].iter().zip(&g[step + 1]).map(|(a, b)| a + b).collect();
            let out = spec.duhamel_step(&next[step], &forcing, delta, 0.5 * delta * grid.m[j]);
            next.push(out);
        }
        let inc = next
            .iter()
            .zip(&w)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0_f64, f64::max);
        if !inc.is_finite() || inc > 1e6 {
            return Err(Error::Solver { message: "Picard iterates diverged".into(), residual: inc });
        }
        increments.push(inc);
        for step in 1..=k {
            let wx = spec.derivative(&next[step]);
            g[step] = gap(&refs[step], &wx);
            if step == k {
                wx_last = wx;
            }
        }
        w = next;
        if !fixed {
            if inc <= settings.tol {
                converged = true;
                break;
            }
            let n = increments.len();
            if n >= 4 && inc > 1e3 * settings.tol && inc > 0.9 * increments[n - 2] {
                break;
            }
        }
    }
    if fixed {
        converged = true;
    }
    Ok(WindowOutcome { w, wx_last, increments, converged })
}

fn assemble_slice(spec: &mut Spectral, xs: &[f64], s: f64, cum_m: f64, w: &[f64]) -> RawSlice {
    let r = Reference::at(s);
    let (wx, wxx) = spec.derivatives(w);
    let n = xs.len();
    let mut u = Vec::with_capacity(n);
    let mut ux = Vec::with_capacity(n);
    let mut uxx = Vec::with_capacity(n);
    for (i, &x) in xs.iter().enumerate() {
        // The last node is the periodic image of the first; w is even.
        let (wi, dxi, dxxi) = if i < w.len() { (w[i], wx[i], wxx[i]) } else { (w[0], -wx[0], wxx[0]) };
        u.push(r.value(x) + cum_m - std::f64::consts::LN_2 + wi);
        ux.push(r.slope(x) + dxi);
        uxx.push(r.curvature(x) + dxxi);
    }
    RawSlice { u, ux, uxx }
}

/// `r(ŝ, x) = E|x + β Z|` with `β² = 1 + 2ŝ`.
#[derive(Clone, Copy)]
struct Reference {
    beta: f64,
}

impl Reference {
    fn at(s: f64) -> Self {
        Self { beta: (1.0 + 2.0 * s).sqrt() }
    }

    fn value(self, x: f64) -> f64 {
        let y = x / self.beta;
        x * (2.0 * normal_cdf(y) - 1.0) + 2.0 * self.beta * normal_pdf(y)
    }

    fn slope(self, x: f64) -> f64 {
        let y = x / self.beta;
        // 2Φ(y) − 1 = erf(y/√2)
        libm::erf(y * std::f64::consts::FRAC_1_SQRT_2)
    }

    fn curvature(self, x: f64) -> f64 {
        2.0 * normal_pdf(x / self.beta) / self.beta
    }
}

fn normal_cdf(y: f64) -> f64 {
    0.5 * libm::erfc(-y * std::f64::consts::FRAC_1_SQRT_2)
}

fn normal_pdf(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Periodic spectral operators on `n` equispaced nodes.
struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
    buf: Vec<Complex<f64>>,
    buf2: Vec<Complex<f64>>,
}

impl Spectral {
    fn new(n: usize, dx: f64) -> Self {
        let mut planner = FftPlanner::new();
        let period = n as f64 * dx;
        let wavenumbers = (0..n)
            .map(|j| {
                let j = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * std::f64::consts::PI * j / period
            })
            .collect();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wavenumbers,
            buf: vec![Complex::default(); n],
            buf2: vec![Complex::default(); n],
        }
    }

    fn load(&mut self, f: &[f64]) {
        for (b, &v) in self.buf.iter_mut().zip(f) {
            *b = Complex::new(v, 0.0);
        }
        self.forward.process(&mut self.buf);
    }

    fn nyquist(&self, j: usize) -> bool {
        let n = self.buf.len();
        n.is_multiple_of(2) && j == n / 2
    }

    /// `e^{δΔ} f`.
    #[cfg(test)]
    fn heat(&mut self, f: &[f64], delta: f64) -> Vec<f64> {
        self.load(f);
        for (b, k) in self.buf.iter_mut().zip(&self.wavenumbers) {
            *b *= (-delta * k * k).exp();
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / self.buf.len() as f64;
        self.buf.iter().map(|c| c.re * scale).collect()
    }

    /// `e^{δΔ} w + c e^{δΔ/2} f`.
    fn duhamel_step(&mut self, w: &[f64], f: &[f64], delta: f64, c: f64) -> Vec<f64> {
        for (b, &v) in self.buf2.iter_mut().zip(f) {
            *b = Complex::new(v, 0.0);
        }
        self.forward.process(&mut self.buf2);
        self.load(w);
        for j in 0..self.buf.len() {
            let k = self.wavenumbers[j];
            let half = (-0.5 * delta * k * k).exp();
            self.buf[j] = self.buf[j] * (half * half) + self.buf2[j] * (c * half);
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / self.buf.len() as f64;
        self.buf.iter().map(|c| c.re * scale).collect()
    }

    fn derivative(&mut self, f: &[f64]) -> Vec<f64> {
        self.load(f);
        for j in 0..self.buf.len() {
            let k = if self.nyquist(j) { 0.0 } else { self.wavenumbers[j] };
            self.buf[j] *= Complex::new(0.0, k);
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / self.buf.len() as f64;
        self.buf.iter().map(|c| c.re * scale).collect()
    }

    fn derivatives(&mut self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.load(f);
        for j in 0..self.buf.len() {
            let k = self.wavenumbers[j];
            let k1 = if self.nyquist(j) { 0.0 } else { k };
            self.buf2[j] = self.buf[j] * (-k * k);
            self.buf[j] *= Complex::new(0.0, k1);
        }
        self.inverse.process(&mut self.buf);
        self.inverse.process(&mut self.buf2);
        let scale = 1.0 / self.buf.len() as f64;
        (
            self.buf.iter().map(|c| c.re * scale).collect(),
            self.buf2.iter().map(|c| c.re * scale).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_solves_heat_equation() {
        let (s, x, h) = (0.4, 0.7, 1e-4);
        let dt = (Reference::at(s + h).value(x) - Reference::at(s - h).value(x)) / (2.0 * h);
        let r = Reference::at(s);
        let dxx = (r.value(x + h) - 2.0 * r.value(x) + r.value(x - h)) / (h * h);
        assert!((dt - dxx).abs() < 1e-6);
        assert!((r.curvature(x) - dxx).abs() < 1e-6);
        let dx = (r.value(x + h) - r.value(x - h)) / (2.0 * h);
        assert!((r.slope(x) - dx).abs() < 1e-8);
    }

    #[test]
    fn spectral_heat_matches_gaussian_closed_form() {
        // e^{δΔ} e^{-x²} = (1 + 4δ)^{-1/2} e^{-x²/(1+4δ)}
        let n = 800;
        let dx = 0.05;
        let xs: Vec<f64> = (0..n).map(|i| -20.0 + i as f64 * dx).collect();
        let f: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
        let mut spec = Spectral::new(n, dx);
        let delta = 0.3;
        let g = spec.heat(&f, delta);
        let a = 1.0 + 4.0 * delta;
        for (x, v) in xs.iter().zip(&g) {
            assert!((v - (-x * x / a).exp() / a.sqrt()).abs() < 1e-13);
        }
        let (d1, d2) = spec.derivatives(&f);
        for ((x, a), b) in xs.iter().zip(&d1).zip(&d2) {
            assert!((a + 2.0 * x * (-x * x).exp()).abs() < 1e-12);
            assert!((b - (4.0 * x * x - 2.0) * (-x * x).exp()).abs() < 1e-11);
        }
    }
}
