//! Semi-implicit finite differences.
//!
//! The unknown is the deviation `v = u − log cosh x − ∫₀^ŝ m` from the far
//! field, which satisfies
//!
//! ```text
//! v_ŝ = v_xx + (1 − m) sech² x + 2 m tanh x · v_x + m v_x²,   v(0, ·) = 0,
//! ```
//!
//! with `v = 0` imposed at `x = ±L` (the closed form `u ≈ |x| − log 2 + ∫m`).
//! Diffusion is Crank–Nicolson; the gradient terms are explicit with one
//! predictor–corrector pass per step.

use super::solution::SolveDiagnostics;
use super::time_grid::TimeGrid;
use super::{sech2, Backend, RawSlice};
use crate::error::{Error, Result};
use crate::quadrature::log_cosh;

pub(crate) fn solve(grid: &TimeGrid, xs: &[f64]) -> Result<(Vec<RawSlice>, SolveDiagnostics)> {
    let n = xs.len();
    let dx = xs[1] - xs[0];
    let tanh: Vec<f64> = xs.iter().map(|x| x.tanh()).collect();
    let sech: Vec<f64> = xs.iter().map(|&x| sech2(x)).collect();
    let log_cosh_x: Vec<f64> = xs.iter().map(|&x| log_cosh(x)).collect();
    let cumulative = grid.cumulative_m();

    let mut v = vec![0.0; n];
    let mut slices = Vec::with_capacity(grid.s.len());
    slices.push(super::terminal_slice(xs));

    let mut rhs = vec![0.0; n];
    let mut src_old = vec![0.0; n];
    let mut src_new = vec![0.0; n];
    let mut pred = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    for j in 0..grid.steps() {
        let dt = grid.s[j + 1] - grid.s[j];
        let m = grid.m[j];
        let r = 0.5 * dt / (dx * dx);

        source(&v, m, dx, &tanh, &sech, &mut src_old);
        explicit_half(&v, r, &mut rhs);
        for i in 1..n - 1 {
            rhs[i] += dt * src_old[i];
        }
        implicit_solve(r, &rhs, &mut pred, &mut scratch);

        source(&pred, m, dx, &tanh, &sech, &mut src_new);
        explicit_half(&v, r, &mut rhs);
        for i in 1..n - 1 {
            rhs[i] += 0.5 * dt * (src_old[i] + src_new[i]);
        }
        implicit_solve(r, &rhs, &mut v, &mut scratch);

        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Solver {
                message: format!("non-finite value at node {bad} after step {j}"),
                residual: f64::INFINITY,
            });
        }
        slices.push(reconstruct(&v, dx, cumulative[j + 1], &log_cosh_x, &tanh, &sech));
    }

    let diagnostics = SolveDiagnostics { backend: Backend::SemiImplicitFd, steps: grid.steps(), ..Default::default() };
    Ok((slices, diagnostics))
}

/// `(1 − m) sech² + 2 m tanh · Dv + m (Dv)²` at interior nodes.
fn source(v: &[f64], m: f64, dx: f64, tanh: &[f64], sech: &[f64], out: &mut [f64]) {
    let n = v.len();
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        let g = (v[i + 1] - v[i - 1]) / (2.0 * dx);
        out[i] = (1.0 - m) * sech[i] + m * g * (2.0 * tanh[i] + g);
    }
}

/// `(I + r δ²) v` at interior nodes; boundary entries are the Dirichlet data (zero).
fn explicit_half(v: &[f64], r: f64, out: &mut [f64]) {
    let n = v.len();
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        out[i] = v[i] + r * (v[i - 1] - 2.0 * v[i] + v[i + 1]);
    }
}

/// Solves `(I − r δ²) x = rhs` on interior nodes with zero boundary values.
fn implicit_solve(r: f64, rhs: &[f64], x: &mut [f64], c: &mut [f64]) {
    let n = rhs.len();
    let (a, b) = (-r, 1.0 + 2.0 * r);
    // Thomas algorithm on nodes 1..n-1; c holds the modified super-diagonal.
    c[1] = a / b;
    x[1] = rhs[1] / b;
    for i in 2..n - 1 {
        let denom = b - a * c[i - 1];
        c[i] = a / denom;
        x[i] = (rhs[i] - a * x[i - 1]) / denom;
    }
    for i in (1..n - 2).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x[0] = 0.0;
    x[n - 1] = 0.0;
}

/// Rebuilds `u, u_x, u_xx` from `v` with fourth-order central differences
/// (second order next to the boundary, one-sided at it).
pub(crate) fn reconstruct(v: &[f64], dx: f64, c: f64, log_cosh_x: &[f64], tanh: &[f64], sech: &[f64]) -> RawSlice {
    let n = v.len();
    let mut u = Vec::with_capacity(n);
    let mut ux = Vec::with_capacity(n);
    let mut uxx = Vec::with_capacity(n);
    for i in 0..n {
        let (d1, d2) = derivatives(v, i, dx);
        u.push(log_cosh_x[i] + c + v[i]);
        ux.push(tanh[i] + d1);
        uxx.push(sech[i] + d2);
    }
    RawSlice { u, ux, uxx }
}

pub(crate) fn derivatives(v: &[f64], i: usize, dx: f64) -> (f64, f64) {
    let n = v.len();
    if i >= 2 && i + 2 < n {
        let d1 = (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * dx);
        let d2 = (-v[i + 2] + 16.0 * v[i + 1] - 30.0 * v[i] + 16.0 * v[i - 1] - v[i - 2]) / (12.0 * dx * dx);
        (d1, d2)
    } else if i >= 1 && i + 1 < n {
        ((v[i + 1] - v[i - 1]) / (2.0 * dx), (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx))
    } else if i == 0 {
        (
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx),
            (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (dx * dx),
        )
    } else {
        (
            (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * dx),
            (2.0 * v[i] - 5.0 * v[i - 1] + 4.0 * v[i - 2] - v[i - 3]) / (dx * dx),
        )
    }
}
