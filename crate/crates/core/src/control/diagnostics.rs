//! Monte Carlo checks of the variational representation and of the
//! identities used in the strict convexity argument.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{simulate_with, ControlPolicy, MCEstimate, McConfig, PathEnd, Stepper};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::measure::DiscreteMeasure;
use crate::pde::{self, PdeSolution};
use crate::quadrature::log_cosh;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapEntry {
    pub policy: ControlPolicy,
    pub value: MCEstimate,
    /// `value(α*) − value(α)` under common random numbers.
    pub gap: MCEstimate,
    /// `½ E ∫ ξ'' μ (α − u_x)² ds` along the α-controlled path, which the gap
    /// equals in exact arithmetic.
    pub weighted_l2: MCEstimate,
    pub below_value: bool,
    pub gap_nonnegative: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub u0h: f64,
    pub optimal: MCEstimate,
    pub optimal_attains_value: bool,
    pub entries: Vec<GapEntry>,
    pub passed: bool,
}

/// Compares the optimal feedback with each perturbation, starting from `(0, h)`.
pub fn verify_optimality(sol: &PdeSolution, perturbations: &[ControlPolicy], mc: &McConfig) -> Result<OptimalityReport> {
    let h = sol.model().h();
    let u0h = sol.evaluate_at(0.0, h)?.u;
    let star = simulate_with(sol, &ControlPolicy::optimal(), h, 0.0, &[], mc, false)?.payoffs();
    let optimal = MCEstimate::from_samples(&star);
    let stepper = Stepper::new(sol, h, 0.0, &[])?;
    let mut entries = Vec::with_capacity(perturbations.len());
    for policy in perturbations {
        policy.validate()?;
        let runs = map_indexed(mc.execution, mc.n_paths, |p| {
            let mut l2 = 0.0;
            let end = stepper.run(policy, mc.seed, p as u64, |node| {
                if node.value.ux.is_finite() {
                    let d = node.alpha - node.value.ux;
                    l2 += 0.5 * stepper.mu[node.i] * d * d * node.dv;
                }
            })?;
            Ok((log_cosh(end.x) - end.cost, l2))
        });
        let runs: Vec<(f64, f64)> = runs.into_iter().collect::<Result<_>>()?;
        let payoff: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let l2: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let gaps: Vec<f64> = star.iter().zip(&payoff).map(|(a, b)| a - b).collect();
        let value = MCEstimate::from_samples(&payoff);
        let gap = MCEstimate::from_samples(&gaps);
        entries.push(GapEntry {
            policy: policy.clone(),
            value,
            gap,
            weighted_l2: MCEstimate::from_samples(&l2),
            below_value: value.mean <= u0h + 3.0 * value.stderr,
            gap_nonnegative: gap.mean >= -3.0 * gap.stderr,
        });
    }
    let optimal_attains_value = optimal.consistent_with(u0h, 3.0, 0.0);
    let passed = optimal_attains_value && entries.iter().all(|e| e.below_value && e.gap_nonnegative);
    Ok(OptimalityReport { u0h, optimal, optimal_attains_value, entries, passed })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub t: f64,
    pub alpha: MCEstimate,
    /// `α_t − α_0` per path.
    pub deviation: MCEstimate,
    pub within: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub ux0: f64,
    pub checkpoints: Vec<CheckpointStat>,
    pub terminal_tanh: MCEstimate,
    pub terminal_within: bool,
    pub passed: bool,
}

/// `E u_x(t, X_t)` along the optimal process from `(0, h)` at each checkpoint,
/// and `E tanh X₁` against `u_x(0, h)`.
pub fn martingale_diag(sol: &PdeSolution, checkpoints: &[f64], mc: &McConfig) -> Result<MartingaleReport> {
    check_times(checkpoints)?;
    let h = sol.model().h();
    let ux0 = sol.evaluate_at(0.0, h)?.ux;
    let stepper = Stepper::new(sol, h, 0.0, checkpoints)?;
    let policy = ControlPolicy::optimal();
    let targets: Vec<usize> = checkpoints.iter().map(|&t| node_index(&stepper, t)).collect::<Result<_>>()?;
    let runs = map_indexed(mc.execution, mc.n_paths, |p| {
        let mut seen = vec![0.0; targets.len()];
        let end = stepper.run(&policy, mc.seed, p as u64, |node| {
            for (slot, &k) in seen.iter_mut().zip(&targets) {
                if k == node.i {
                    *slot = node.value.ux;
                }
            }
        })?;
        Ok((seen, end.x.tanh()))
    });
    let runs: Vec<(Vec<f64>, f64)> = runs.into_iter().collect::<Result<_>>()?;
    let mut stats = Vec::with_capacity(checkpoints.len());
    for (c, &t) in checkpoints.iter().enumerate() {
        let a: Vec<f64> = runs.iter().map(|r| r.0[c]).collect();
        let d: Vec<f64> = a.iter().map(|v| v - ux0).collect();
        let deviation = MCEstimate::from_samples(&d);
        stats.push(CheckpointStat {
            t,
            alpha: MCEstimate::from_samples(&a),
            deviation,
            within: deviation.consistent_with(0.0, 3.0, 0.0),
        });
    }
    let tanh: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let terminal_tanh = MCEstimate::from_samples(&tanh);
    let terminal_within = terminal_tanh.consistent_with(ux0, 3.0, 0.0);
    let passed = terminal_within && stats.iter().all(|s| s.within);
    Ok(MartingaleReport { ux0, checkpoints: stats, terminal_tanh, terminal_within, passed })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelReport {
    pub s_grid: Vec<f64>,
    pub p: Vec<MCEstimate>,
    /// `p(s_{i+1}) − p(s_i)` per path.
    pub increments: Vec<MCEstimate>,
    pub nondecreasing: bool,
    /// Increments exceeding three standard errors.
    pub strictly_increasing: bool,
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub positive_semidefinite: bool,
    pub passed: bool,
}

/// `p(s) = ∫₀^s ξ'' E u_xx²(t, X_t) dt` on `s_grid` and the kernel `p(s ∧ t)`.
pub fn kernel_diag(sol: &PdeSolution, s_grid: &[f64], mc: &McConfig) -> Result<KernelReport> {
    check_times(s_grid)?;
    if s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("kernel grid must be strictly increasing".into()));
    }
    let h = sol.model().h();
    let stepper = Stepper::new(sol, h, 0.0, s_grid)?;
    let targets: Vec<usize> = s_grid.iter().map(|&t| node_index(&stepper, t)).collect::<Result<_>>()?;
    let policy = ControlPolicy::optimal();
    let runs = map_indexed(mc.execution, mc.n_paths, |p| {
        let mut acc = 0.0;
        let mut seen = vec![0.0; targets.len()];
        stepper.run(&policy, mc.seed, p as u64, |node| {
            for (slot, &k) in seen.iter_mut().zip(&targets) {
                if k == node.i {
                    *slot = acc;
                }
            }
            acc += node.value.uxx * node.value.uxx * node.dv;
        })?;
        Ok(seen)
    });
    let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
    let column = |c: usize| -> Vec<f64> { runs.iter().map(|r| r[c]).collect() };
    let p: Vec<MCEstimate> = (0..s_grid.len()).map(|c| MCEstimate::from_samples(&column(c))).collect();
    let increments: Vec<MCEstimate> = (1..s_grid.len())
        .map(|c| {
            let d: Vec<f64> = runs.iter().map(|r| r[c] - r[c - 1]).collect();
            MCEstimate::from_samples(&d)
        })
        .collect();
    let nondecreasing = increments.iter().all(|e| e.mean >= -3.0 * e.stderr);
    let strictly_increasing = increments.iter().all(|e| e.mean > 3.0 * e.stderr);
    let n = s_grid.len();
    let k = DMatrix::from_fn(n, n, |i, j| p[i.min(j)].mean);
    let trace = k.trace();
    let min_eigenvalue = SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let positive_semidefinite = min_eigenvalue >= -1e-8 * trace;
    let matrix = (0..n).map(|i| (0..n).map(|j| k[(i, j)]).collect()).collect();
    Ok(KernelReport {
        s_grid: s_grid.to_vec(),
        p,
        increments,
        nondecreasing,
        strictly_increasing,
        matrix,
        min_eigenvalue,
        trace,
        positive_semidefinite,
        passed: nondecreasing && positive_semidefinite,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeResidual {
    pub t: f64,
    pub x: f64,
    pub uxx: f64,
    pub ux: f64,
    /// `μ[0, t)`.
    pub mass_before: f64,
    /// `E ∫_t^1 u_x²(s, X_s) dμ(s)` from `X_t = x`.
    pub expectation: MCEstimate,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RearrangementReport {
    pub probes: Vec<ProbeResidual>,
    pub passed: bool,
}

/// Residual of `u_xx + μ[0,t) u_x² + E ∫_t^1 u_x²(s, X_s) dμ(s) = 1` at each
/// probe, accepted within `3·stderr + slack`.
pub fn rearrangement_identity(
    sol: &PdeSolution,
    probes: &[(f64, f64)],
    slack: f64,
    mc: &McConfig,
) -> Result<RearrangementReport> {
    let mu = sol.measure();
    let mut out = Vec::with_capacity(probes.len());
    for (n, &(t, x)) in probes.iter().enumerate() {
        let here = sol.evaluate_at(t, x)?;
        let atoms: Vec<(f64, f64)> = mu.masses().filter(|&(q, _)| q >= t).collect();
        let atom_times: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        let stepper = Stepper::new(sol, x, t, &atom_times)?;
        let targets: Vec<(usize, f64)> =
            atoms.iter().map(|&(q, w)| node_index(&stepper, q).map(|k| (k, w))).collect::<Result<_>>()?;
        let policy = ControlPolicy::optimal();
        // Distinct streams per probe so probes are independent estimates.
        let seed = mc.seed.wrapping_add(n as u64);
        let runs = map_indexed(mc.execution, mc.n_paths, |p| {
            let mut acc = 0.0;
            stepper.run(&policy, seed, p as u64, |node| {
                for &(k, w) in &targets {
                    if k == node.i {
                        acc += w * node.value.ux * node.value.ux;
                    }
                }
            })?;
            Ok(acc)
        });
        let samples: Vec<f64> = runs.into_iter().collect::<Result<_>>()?;
        let expectation = MCEstimate::from_samples(&samples);
        let mass_before = mu.cdf_left(t);
        let residual = (here.uxx + mass_before * here.ux * here.ux + expectation.mean - 1.0).abs();
        let tolerance = 3.0 * expectation.stderr + slack;
        out.push(ProbeResidual {
            t,
            x,
            uxx: here.uxx,
            ux: here.ux,
            mass_before,
            expectation,
            residual,
            tolerance,
            passed: residual <= tolerance,
        });
    }
    let passed = out.iter().all(|p| p.passed);
    Ok(RearrangementReport { probes: out, passed })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuxiliaryReport {
    pub theta: f64,
    /// `max |X₁ − θ Y₁ − (1 − θ) Z₁|` over paths.
    pub identity_error: f64,
    pub var_difference: f64,
    pub var_stderr: f64,
    /// `Var(Y₁ − Z₁) > 3 · stderr`.
    pub distinct: bool,
    pub u_theta: f64,
    pub u_mu: f64,
    pub u_nu: f64,
    pub value_x: MCEstimate,
    /// `θ payoff_μ(Y) + (1 − θ) payoff_ν(Z)` per path.
    pub value_mix: MCEstimate,
    /// Pathwise convexity gap of `log cosh`, nonnegative by construction.
    pub jensen_gap: MCEstimate,
    pub ordered: bool,
    pub passed: bool,
}

/// Re-integrates the optimal control of `μ_θ = θμ + (1 − θ)ν` under `μ` and
/// `ν` with shared noise. `sol_theta` must be the solution for `μ_θ`.
pub fn auxiliary_processes(
    sol_theta: &PdeSolution,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    theta: f64,
    mc: &McConfig,
) -> Result<AuxiliaryReport> {
    let mix = DiscreteMeasure::mix(theta, mu, nu)?;
    if sol_theta.measure() != &mix {
        return Err(Error::Usage("solution does not belong to the mixed measure".into()));
    }
    let model = sol_theta.model();
    let h = model.h();
    let mut cfg = sol_theta.config().clone();
    cfg.extra_knots.extend(mu.atoms().iter().chain(nu.atoms()));
    let u_mu = pde::solve(model, mu, &cfg)?.evaluate_at(0.0, h)?.u;
    let u_nu = pde::solve(model, nu, &cfg)?.evaluate_at(0.0, h)?.u;
    let u_theta = sol_theta.evaluate_at(0.0, h)?.u;

    let stepper = Stepper::new(sol_theta, h, 0.0, &[])?;
    let mu_left: Vec<f64> = stepper.times.iter().map(|&t| mu.cdf_unchecked(t)).collect();
    let nu_left: Vec<f64> = stepper.times.iter().map(|&t| nu.cdf_unchecked(t)).collect();
    let policy = ControlPolicy::optimal();
    let runs = map_indexed(mc.execution, mc.n_paths, |p| {
        let (mut y, mut z, mut cy, mut cz) = (h, h, 0.0, 0.0);
        let end: PathEnd = stepper.run(&policy, mc.seed, p as u64, |node| {
            let (a, i) = (node.alpha, node.i);
            y += mu_left[i] * a * node.dv + node.noise;
            z += nu_left[i] * a * node.dv + node.noise;
            cy += 0.5 * mu_left[i] * a * a * node.dv;
            cz += 0.5 * nu_left[i] * a * a * node.dv;
        })?;
        Ok([end.x, end.cost, y, z, cy, cz])
    });
    let runs: Vec<[f64; 6]> = runs.into_iter().collect::<Result<_>>()?;

    let identity_error =
        runs.iter().map(|r| (r[0] - theta * r[2] - (1.0 - theta) * r[3]).abs()).fold(0.0, f64::max);
    let diff: Vec<f64> = runs.iter().map(|r| r[2] - r[3]).collect();
    let (var_difference, var_stderr) = variance_with_stderr(&diff);
    let px: Vec<f64> = runs.iter().map(|r| log_cosh(r[0]) - r[1]).collect();
    let pmix: Vec<f64> = runs
        .iter()
        .map(|r| theta * (log_cosh(r[2]) - r[4]) + (1.0 - theta) * (log_cosh(r[3]) - r[5]))
        .collect();
    let jensen: Vec<f64> = pmix.iter().zip(&px).map(|(a, b)| a - b).collect();
    let value_x = MCEstimate::from_samples(&px);
    let value_mix = MCEstimate::from_samples(&pmix);
    let jensen_gap = MCEstimate::from_samples(&jensen);
    let distinct = var_difference > 3.0 * var_stderr;
    let ordered =
        jensen_gap.mean > 3.0 * jensen_gap.stderr && value_mix.mean <= theta * u_mu + (1.0 - theta) * u_nu + 3.0 * value_mix.stderr;
    let scale = runs.iter().map(|r| r[0].abs()).fold(1.0, f64::max);
    let passed = identity_error <= 1e-12 * scale && distinct && ordered;
    Ok(AuxiliaryReport {
        theta,
        identity_error,
        var_difference,
        var_stderr,
        distinct,
        u_theta,
        u_mu,
        u_nu,
        value_x,
        value_mix,
        jensen_gap,
        ordered,
        passed,
    })
}

/// Sample variance and the standard error `sqrt((m₄ − s⁴) / n)` of that estimate.
fn variance_with_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (var, ((m4 - var * var).max(0.0) / n).sqrt())
}

fn check_times(ts: &[f64]) -> Result<()> {
    if ts.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Domain("diagnostic times must lie in [0, 1]".into()));
    }
    Ok(())
}

fn node_index(stepper: &Stepper<'_>, t: f64) -> Result<usize> {
    stepper
        .times
        .iter()
        .position(|&s| s == t)
        .ok_or_else(|| Error::Domain(format!("time {t} is not a node of the simulation grid")))
}
