//! The `verify` subcommand: each property check on one configuration.

use parisi_core::cascade::cascade_value;
use parisi_core::control::{
    kernel_diag, martingale_diag, rearrangement_identity, verify_optimality, ControlPolicy, McConfig,
};
use parisi_core::optimizer::{convexity_scan, Evaluator};
use parisi_core::pde::{self, Backend};
use parisi_core::quadrature::QuadratureRule;
use parisi_core::{DiscreteMeasure, Execution};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::write_json;

/// Agreement required between the two backends and against the oracle.
const AGREEMENT_TOL: f64 = 5e-4;
/// Additive slack of the Guerra bounds.
const GUERRA_SLACK: f64 = 1e-3;
/// Slack added to the Monte Carlo band of the rearrangement identity.
const REARRANGEMENT_SLACK: f64 = 1e-3;
/// Second differences must exceed `-SCAN_TOL`, the midpoint gap `SCAN_TOL`.
const SCAN_TOL: f64 = 2e-4;

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    report: Value,
}

impl Check {
    fn new<T: Serialize>(name: &'static str, passed: bool, report: &T) -> Self {
        Self { name, passed, report: serde_json::to_value(report).unwrap_or(Value::Null) }
    }
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<u8> {
    let model = &cfg.model;
    let h = cfg.h;
    let mu = cfg.mu()?;
    let nu = match cfg.nu()? {
        Some(nu) => nu,
        None => DiscreteMeasure::mix(0.5, &mu, &DiscreteMeasure::dirac(1.0)?)?,
    };
    let mut checks = Vec::new();

    let fd = pde::solve(model, &mu, &cfg.grid.clone().with_backend(Backend::SemiImplicitFd))?;
    let picard = pde::solve(model, &mu, &cfg.grid.clone().with_backend(Backend::DuhamelPicard))?;
    for (name, sol) in [("max_principle_fd", &fd), ("max_principle_picard", &picard)] {
        let report = sol.max_principle();
        checks.push(Check::new(name, report.holds, &report));
    }

    let u_fd = fd.evaluate_at(0.0, h)?.u;
    let u_picard = picard.evaluate_at(0.0, h)?.u;
    let u_oracle = cascade_value(model, &mu, &QuadratureRule::gauss_hermite(cfg.order)?)?;
    let backend_gap = (u_fd - u_picard).abs();
    let oracle_gap = (u_fd - u_oracle).abs().max((u_picard - u_oracle).abs());
    checks.push(Check::new(
        "backend_agreement",
        backend_gap <= AGREEMENT_TOL,
        &json!({ "fd": u_fd, "picard": u_picard, "difference": backend_gap, "tolerance": AGREEMENT_TOL }),
    ));
    checks.push(Check::new(
        "oracle_agreement",
        oracle_gap <= AGREEMENT_TOL,
        &json!({ "oracle": u_oracle, "max_difference": oracle_gap, "tolerance": AGREEMENT_TOL }),
    ));

    let sol = match cfg.grid.backend {
        Backend::SemiImplicitFd => &fd,
        Backend::DuhamelPicard => &picard,
    };
    let guerra = pde::guerra_check(model, &mu, &nu, &cfg.grid, GUERRA_SLACK)?;
    checks.push(Check::new("guerra_bound", guerra.passed, &guerra));

    let mc = McConfig::new(cfg.paths, cfg.seed);
    // Shift the feedback by 0.5 where mu[0, s] >= 0.5, so the drift sees it.
    let t_start = mu.masses().scan(0.0, |c, (q, w)| {
        *c += w;
        Some((q, *c))
    });
    let t_start = t_start.filter(|&(_, c)| c >= 0.5).map(|(q, _)| q).next().unwrap_or(0.0);
    let perturbations = [ControlPolicy::constant(0.0), ControlPolicy::perturbed(1.0, 0.5, t_start, 1.0)];
    let optimality = verify_optimality(sol, &perturbations, &mc)?;
    let shifted = &optimality.entries[1].gap;
    let strict = shifted.mean > 3.0 * shifted.stderr;
    checks.push(Check::new("control_optimality", optimality.passed && strict, &optimality));

    let martingale = martingale_diag(sol, &[0.25, 0.5, 0.75, 1.0], &mc)?;
    checks.push(Check::new("martingale", martingale.passed, &martingale));

    let kernel = kernel_diag(sol, &[0.0, 0.25, 0.5, 0.75, 1.0], &mc)?;
    checks.push(Check::new("kernel", kernel.passed, &kernel));

    let probes = [(0.25, 0.0), (0.5, h), (0.75, 0.5)];
    let rearrangement = rearrangement_identity(sol, &probes, REARRANGEMENT_SLACK, &mc)?;
    checks.push(Check::new("rearrangement_identity", rearrangement.passed, &rearrangement));

    let scan = convexity_scan(
        model,
        &mu,
        &nu,
        cfg.n_theta,
        &Evaluator::PdeGrid { grid: cfg.grid.clone() },
        Execution::Parallel,
    )?;
    // A strict gap is only demanded between distinct measures.
    let gap_ok = scan.distance == 0.0 || scan.midpoint_gap > SCAN_TOL;
    let convex = gap_ok && scan.second_differences.iter().all(|&d| d >= -SCAN_TOL);
    checks.push(Check::new("convexity_scan", convex, &json!({ "scan": scan, "tolerance": SCAN_TOL })));

    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    write_json(cfg, json!({ "nu": nu, "checks": checks, "passed": passed }), true)?;
    Ok(if passed { 0 } else { 2 })
}
