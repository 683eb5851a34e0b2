//! Solvers for the Parisi PDE
//!
//! ```text
//! ∂_t u + ½ ξ''(t) (∂_xx u + μ[0,t] (∂_x u)²) = 0,   u(1, x) = log cosh x,
//! ```
//!
//! posed after the time change `ŝ = ½(ξ'(1) − ξ'(t))` as the forward
//! semilinear heat equation `∂_ŝ u − ∂_xx u = m(ŝ) u_x²`, `u(0, ·) = log cosh`.
//!
//! Two independent backends are provided: a semi-implicit finite-difference
//! scheme and a windowed Picard iteration of the Duhamel fixed-point form.

mod convergence;
mod fd;
mod picard;
mod solution;
mod time_grid;

use serde::{Deserialize, Serialize};

pub use convergence::{convergence_study, observed_orders, ConvergencePoint};
pub use picard::{picard_iterate, PicardSettings, WindowTrace};
pub use solution::{MaxPrincipleReport, PdeSolution, PointValue, SolveDiagnostics};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;
use time_grid::TimeGrid;

/// Target spatial step used by [`GridConfig::for_model`].
pub const DEFAULT_DX: f64 = 0.02;
/// Default maximum step in the changed time.
pub const DEFAULT_DT_MAX: f64 = 0.0025;
/// Width added beyond `|h| + 6 sqrt(ξ'(1))` so the far-field closed form holds
/// to `O(e^{-2·margin})` at the boundary.
pub const BOUNDARY_MARGIN: f64 = 8.0;
/// Smallest admissible number of spatial nodes.
pub const MIN_NODES: usize = 201;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    SemiImplicitFd,
    DuhamelPicard,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi_implicit_fd" | "fd" => Ok(Backend::SemiImplicitFd),
            "duhamel_picard" | "picard" => Ok(Backend::DuhamelPicard),
            other => Err(Error::Parse(format!(
                "unknown backend `{other}` (expected semi_implicit_fd or duhamel_picard)"
            ))),
        }
    }
}

/// Spatial grid `[-L, L]` with `nx` nodes, time-step bound and backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub half_width: f64,
    pub nx: usize,
    pub dt_max: f64,
    pub backend: Backend,
    /// Additional original times the step partition must contain.
    #[serde(default)]
    pub extra_knots: Vec<f64>,
    #[serde(default)]
    pub picard: PicardSettings,
}

impl GridConfig {
    /// Default grid for a model: `L = |h| + 6 sqrt(ξ'(1)) + BOUNDARY_MARGIN`
    /// rounded up to a multiple of `DEFAULT_DX`.
    pub fn for_model(model: &MixtureModel, backend: Backend) -> Self {
        Self::with_spacing(model, backend, DEFAULT_DX)
    }

    /// Default half-width with a chosen spatial step.
    pub fn with_spacing(model: &MixtureModel, backend: Backend, dx: f64) -> Self {
        let half = default_half_width(model);
        let cells = ((half / dx).ceil() as usize).max(MIN_NODES / 2);
        Self {
            half_width: cells as f64 * dx,
            nx: 2 * cells + 1,
            dt_max: DEFAULT_DT_MAX,
            backend,
            extra_knots: Vec::new(),
            picard: PicardSettings::default(),
        }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.nx - 1) as f64
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_knots(mut self, knots: &[f64]) -> Self {
        self.extra_knots.extend_from_slice(knots);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::Config(format!("half-width must be positive, got {}", self.half_width)));
        }
        if self.nx < MIN_NODES || self.nx.is_multiple_of(2) {
            return Err(Error::Config(format!("nx must be odd and >= {MIN_NODES}, got {}", self.nx)));
        }
        if !(self.dt_max.is_finite() && self.dt_max > 0.0) {
            return Err(Error::Config(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        if self.backend == Backend::SemiImplicitFd && self.dt_max > 0.5 * self.dx() {
            return Err(Error::Config(format!(
                "step-size violation: dt_max = {} exceeds dx/2 = {} for the explicit gradient term",
                self.dt_max,
                0.5 * self.dx()
            )));
        }
        if self.extra_knots.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::Config("extra knots must lie in [0, 1]".into()));
        }
        self.picard.validate()
    }
}

pub fn default_half_width(model: &MixtureModel) -> f64 {
    model.h().abs() + 6.0 * model.xi_prime(1.0).sqrt() + BOUNDARY_MARGIN
}

/// Node values of one time slice, ordered by increasing changed time.
pub(crate) struct RawSlice {
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub uxx: Vec<f64>,
}

/// Solves the Parisi PDE for `(model, mu)` on the grid described by `cfg`.
pub fn solve(model: &MixtureModel, mu: &DiscreteMeasure, cfg: &GridConfig) -> Result<PdeSolution> {
    cfg.validate()?;
    let grid = TimeGrid::build(model, mu, &cfg.extra_knots, cfg.dt_max);
    let xs = nodes(cfg);
    let (slices, diagnostics) = match cfg.backend {
        Backend::SemiImplicitFd => fd::solve(&grid, &xs)?,
        Backend::DuhamelPicard => picard::solve(&grid, &xs, &cfg.picard, None)?,
    };
    Ok(PdeSolution::assemble(model.clone(), mu.clone(), cfg.clone(), &grid, xs, slices, diagnostics))
}

/// Sup-grid differences of two solutions against the Lipschitz bounds
/// `‖u_μ − u_ν‖ ≤ ξ''(1) d(μ, ν)` and `‖∂_x u_μ − ∂_x u_ν‖ ≤ e^{ξ'(1) − ξ'(0)} ξ''(1) d(μ, ν)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuerraReport {
    pub distance: f64,
    pub sup_u: f64,
    pub sup_ux: f64,
    pub bound_u: f64,
    pub bound_ux: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Solves for `mu` and `nu` on one grid (knots at the atoms of both) and
/// compares them at every node.
pub fn guerra_check(
    model: &MixtureModel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &GridConfig,
    slack: f64,
) -> Result<GuerraReport> {
    let cfg = cfg.clone().with_knots(&[mu.atoms(), nu.atoms()].concat());
    let a = solve(model, mu, &cfg)?;
    let b = solve(model, nu, &cfg)?;
    debug_assert_eq!(a.times(), b.times());
    let mut sup_u = 0.0_f64;
    let mut sup_ux = 0.0_f64;
    for k in 0..a.times().len() {
        for (x, y) in a.slice_u(k).iter().zip(b.slice_u(k)) {
            sup_u = sup_u.max((x - y).abs());
        }
        for (x, y) in a.slice_ux(k).iter().zip(b.slice_ux(k)) {
            sup_ux = sup_ux.max((x - y).abs());
        }
    }
    let distance = mu.distance(nu);
    let bound_u = model.xi_second(1.0) * distance;
    let bound_ux = model.total_variance().exp() * bound_u;
    let passed = sup_u <= bound_u + slack && sup_ux <= bound_ux + slack;
    Ok(GuerraReport { distance, sup_u, sup_ux, bound_u, bound_ux, slack, passed })
}

pub(crate) fn nodes(cfg: &GridConfig) -> Vec<f64> {
    let dx = cfg.dx();
    let half = (cfg.nx - 1) / 2;
    (0..cfg.nx).map(|i| (i as f64 - half as f64) * dx).collect()
}

/// The terminal datum and its derivatives.
pub(crate) fn terminal_slice(xs: &[f64]) -> RawSlice {
    RawSlice {
        u: xs.iter().map(|&x| crate::quadrature::log_cosh(x)).collect(),
        ux: xs.iter().map(|&x| x.tanh()).collect(),
        uxx: xs.iter().map(|&x| sech2(x)).collect(),
    }
}

pub(crate) fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}
