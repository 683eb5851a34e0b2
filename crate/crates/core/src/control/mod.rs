//! Monte Carlo for the controlled diffusion
//!
//! ```text
//! dX = ξ''(s) μ[0, s] α_s ds + sqrt(ξ''(s)) dW,
//! ```
//!
//! and the payoff `log cosh X₁ − ½ ∫ ξ'' μ α² ds` whose supremum over
//! bounded controls is `u(t, x)`. Steps follow the solution's time grid, so
//! `μ[0, ·]` is constant on each step; the Gaussian increment of a step has
//! the exact variance `ξ'(t_{i+1}) − ξ'(t_i)`.

mod diagnostics;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use diagnostics::{
    auxiliary_processes, kernel_diag, martingale_diag, rearrangement_identity, verify_optimality, AuxiliaryReport,
    CheckpointStat, GapEntry, KernelReport, MartingaleReport, OptimalityReport, ProbeResidual, RearrangementReport,
};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::format::sig17;
use crate::pde::{PdeSolution, PointValue};
use crate::quadrature::log_cosh;
use crate::rng::{path_stream, standard_normal};

/// Feedback rule before truncation to `|α| ≤ bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// `α = u_x(t, x)`.
    OptimalFeedback,
    Constant { value: f64 },
    /// `α = scale · u_x + shift` for `t ∈ [t_start, t_end)`, `u_x` elsewhere.
    Perturbed { scale: f64, shift: f64, t_start: f64, t_end: f64 },
    /// Bilinear interpolation of `values[i * xs.len() + j]` at `(times[i], xs[j])`,
    /// clamped to the table.
    Table { times: Vec<f64>, xs: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub kind: PolicyKind,
    pub bound: f64,
}

impl ControlPolicy {
    /// The optimal feedback with the bound 1 implied by `|u_x| < 1`.
    pub fn optimal() -> Self {
        Self { kind: PolicyKind::OptimalFeedback, bound: 1.0 }
    }

    pub fn constant(value: f64) -> Self {
        Self { kind: PolicyKind::Constant { value }, bound: value.abs().max(1.0) }
    }

    pub fn perturbed(scale: f64, shift: f64, t_start: f64, t_end: f64) -> Self {
        Self {
            kind: PolicyKind::Perturbed { scale, shift, t_start, t_end },
            bound: scale.abs() + shift.abs(),
        }
    }

    pub fn table(times: Vec<f64>, xs: Vec<f64>, values: Vec<f64>, bound: f64) -> Result<Self> {
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if times.is_empty() || xs.is_empty() || values.len() != times.len() * xs.len() || !sorted(&times) || !sorted(&xs)
        {
            return Err(Error::Domain("policy table needs increasing axes and times × xs values".into()));
        }
        let policy = Self { kind: PolicyKind::Table { times, xs, values }, bound };
        policy.validate()?;
        Ok(policy)
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(Error::Domain(format!("control bound must be finite and positive, got {}", self.bound)));
        }
        Ok(())
    }

    /// `α(t, x)` given the optimal feedback `ux = u_x(t, x)`.
    fn apply(&self, t: f64, x: f64, ux: f64) -> f64 {
        let raw = match &self.kind {
            PolicyKind::OptimalFeedback => ux,
            PolicyKind::Constant { value } => *value,
            PolicyKind::Perturbed { scale, shift, t_start, t_end } => {
                if t >= *t_start && t < *t_end {
                    scale * ux + shift
                } else {
                    ux
                }
            }
            PolicyKind::Table { times, xs, values } => bilinear(times, xs, values, t, x),
        };
        raw.clamp(-self.bound, self.bound)
    }

    fn needs_feedback(&self) -> bool {
        !matches!(self.kind, PolicyKind::Constant { .. } | PolicyKind::Table { .. })
    }
}

fn bilinear(times: &[f64], xs: &[f64], values: &[f64], t: f64, x: f64) -> f64 {
    let locate = |axis: &[f64], v: f64| -> (usize, f64) {
        if axis.len() == 1 || v <= axis[0] {
            return (0, 0.0);
        }
        let n = axis.len();
        if v >= axis[n - 1] {
            return (n - 2, 1.0);
        }
        let i = axis.partition_point(|&a| a <= v) - 1;
        (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
    };
    let (i, a) = locate(times, t);
    let (j, b) = locate(xs, x);
    let nx = xs.len();
    let at = |i: usize, j: usize| values[i.min(times.len() - 1) * nx + j.min(nx - 1)];
    (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1)) + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
}

/// Monte Carlo sizing shared by all diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, execution: Execution::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Config("at least two Monte Carlo paths are required".into()));
        }
        Ok(())
    }
}

/// Sample mean with `stderr = sample_std / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MCEstimate {
    /// Sequential two-pass reduction in sample order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt(), n }
    }

    /// `|mean − target| ≤ k · stderr + slack`.
    pub fn consistent_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

/// Simulated paths. Only terminal states and costs are kept unless paths
/// were recorded.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub policy: ControlPolicy,
    pub terminal: Vec<f64>,
    pub cost: Vec<f64>,
    /// Per path and node: `(X, α, running cost)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<(f64, f64, f64)>>>,
}

impl PathEnsemble {
    pub fn payoffs(&self) -> Vec<f64> {
        self.terminal.iter().zip(&self.cost).map(|(&x, c)| log_cosh(x) - c).collect()
    }

    /// CSV `path_id,t,X,alpha,cost`; requires recorded paths.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let paths = self
            .paths
            .as_ref()
            .ok_or_else(|| Error::Usage("ensemble was simulated without recording paths".into()))?;
        let io = |e: std::io::Error| Error::Usage(format!("failed to write path dump: {e}"));
        writeln!(out, "path_id,t,X,alpha,cost").map_err(io)?;
        for (p, path) in paths.iter().enumerate() {
            for (&t, &(x, a, c)) in self.times.iter().zip(path) {
                writeln!(out, "{p},{},{},{},{}", sig17(t), sig17(x), sig17(a), sig17(c)).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// `E[log cosh X₁ − ½ ∫ ξ'' μ α² ds]`.
pub fn estimate_value(ens: &PathEnsemble) -> MCEstimate {
    MCEstimate::from_samples(&ens.payoffs())
}

pub fn simulate(sol: &PdeSolution, policy: &ControlPolicy, x0: f64, t0: f64, mc: &McConfig) -> Result<PathEnsemble> {
    simulate_with(sol, policy, x0, t0, &[], mc, false)
}

/// As [`simulate`], also storing every path.
pub fn simulate_recorded(
    sol: &PdeSolution,
    policy: &ControlPolicy,
    x0: f64,
    t0: f64,
    mc: &McConfig,
) -> Result<PathEnsemble> {
    simulate_with(sol, policy, x0, t0, &[], mc, true)
}

pub(crate) fn simulate_with(
    sol: &PdeSolution,
    policy: &ControlPolicy,
    x0: f64,
    t0: f64,
    checkpoints: &[f64],
    mc: &McConfig,
    record: bool,
) -> Result<PathEnsemble> {
    mc.validate()?;
    let stepper = Stepper::new(sol, x0, t0, checkpoints)?;
    let runs = map_indexed(mc.execution, mc.n_paths, |p| {
        let mut trace = record.then(|| Vec::with_capacity(stepper.times.len()));
        let end = stepper.run(policy, mc.seed, p as u64, |node| {
            if let Some(tr) = trace.as_mut() {
                tr.push((node.x, node.alpha, node.cost));
            }
        })?;
        Ok((end, trace))
    });
    let mut terminal = Vec::with_capacity(mc.n_paths);
    let mut cost = Vec::with_capacity(mc.n_paths);
    let mut paths = record.then(|| Vec::with_capacity(mc.n_paths));
    for run in runs {
        let (end, trace): (PathEnd, Option<Vec<_>>) = run?;
        terminal.push(end.x);
        cost.push(end.cost);
        if let (Some(all), Some(tr)) = (paths.as_mut(), trace) {
            all.push(tr);
        }
    }
    Ok(PathEnsemble {
        n_paths: mc.n_paths,
        seed: mc.seed,
        x0,
        t0,
        times: stepper.times.clone(),
        policy: policy.clone(),
        terminal,
        cost,
        paths,
    })
}

/// State at a grid node, before the step to the next node is taken.
pub(crate) struct Node {
    pub i: usize,
    pub x: f64,
    /// Solution values at `(t, x)`; zero when the policy does not read them.
    pub value: PointValue,
    pub alpha: f64,
    /// Running cost accumulated up to this node.
    pub cost: f64,
    /// `ξ'(t_{i+1}) − ξ'(t_i)`; zero at the last node.
    pub dv: f64,
    /// The Gaussian increment `sqrt(dv) Z` of the step leaving this node.
    pub noise: f64,
}

pub(crate) struct PathEnd {
    pub x: f64,
    pub cost: f64,
}

/// Euler–Maruyama on the solution's slice times in `[t0, 1]`, with extra nodes.
pub(crate) struct Stepper<'a> {
    sol: &'a PdeSolution,
    pub times: Vec<f64>,
    slices: Vec<Option<usize>>,
    dv: Vec<f64>,
    /// `μ[0, t_i]`, constant on `[t_i, t_{i+1})`.
    pub mu: Vec<f64>,
    x0: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(sol: &'a PdeSolution, x0: f64, t0: f64, extra: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&t0) {
            return Err(Error::Domain(format!("start time {t0} outside [0, 1]")));
        }
        if !(x0.abs() <= sol.half_width()) {
            return Err(Error::Domain(format!("start point {x0} outside the solution grid")));
        }
        let mut times: Vec<f64> = std::iter::once(t0)
            .chain(sol.times().iter().copied().filter(|&t| t > t0))
            .chain(extra.iter().copied().filter(|&t| t > t0 && t <= 1.0))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let model = sol.model();
        let dv = times
            .windows(2)
            .map(|w| (model.xi_prime(w[1]) - model.xi_prime(w[0])).max(0.0))
            .chain(std::iter::once(0.0))
            .collect();
        let mu = times.iter().map(|&t| sol.measure().cdf_unchecked(t)).collect();
        let slices = times.iter().map(|&t| sol.slice_index(t)).collect();
        Ok(Self { sol, times, slices, dv, mu, x0 })
    }

    fn feedback(&self, i: usize, x: f64) -> Result<PointValue> {
        match self.slices[i] {
            Some(k) => Ok(self.sol.eval_slice(k, x)),
            None => self.sol.evaluate_at(self.times[i], x),
        }
    }

    /// Integrates one path, calling `visit` at every node.
    pub fn run<F: FnMut(&Node)>(&self, policy: &ControlPolicy, seed: u64, path: u64, mut visit: F) -> Result<PathEnd> {
        let mut rng = path_stream(seed, path);
        let needs = policy.needs_feedback();
        let mut x = self.x0;
        let mut cost = 0.0;
        let last = self.times.len() - 1;
        for i in 0..=last {
            let t = self.times[i];
            let l = self.sol.half_width();
            if !(x.abs() <= l) {
                return Err(Error::Domain(format!(
                    "path left the solution grid (|X| = {} > L = {l}); increase the grid half-width",
                    x.abs()
                )));
            }
            let value = if needs { self.feedback(i, x)? } else { PointValue { u: 0.0, ux: 0.0, uxx: 0.0 } };
            let alpha = policy.apply(t, x, value.ux);
            let dv = self.dv[i];
            let noise = if i < last { dv.sqrt() * standard_normal(&mut rng) } else { 0.0 };
            visit(&Node { i, x, value, alpha, cost, dv, noise });
            if i < last {
                let m = self.mu[i];
                x += m * alpha * dv + noise;
                cost += 0.5 * m * alpha * alpha * dv;
            }
        }
        Ok(PathEnd { x, cost })
    }
}
