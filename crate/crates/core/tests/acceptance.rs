//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use parisi_core::cascade::cascade_value;
use parisi_core::control::{
    kernel_diag, martingale_diag, rearrangement_identity, verify_optimality, ControlPolicy, McConfig,
};
use parisi_core::functional::evaluate;
use parisi_core::mixture::Term;
use parisi_core::optimizer::{convexity_scan, minimize_weights_multistart, Evaluator, MinimizeOptions};
use parisi_core::pde::{self, convergence_study, observed_orders, Backend, GridConfig};
use parisi_core::quadrature::{log_cosh, QuadratureRule};
use parisi_core::{DiscreteMeasure, Execution, MixtureModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn random_model(rng: &mut ChaCha8Rng) -> MixtureModel {
    let mut degrees = vec![1u32, 2, 3, 4];
    let n = rng.random_range(1..=3);
    let mut picked = Vec::with_capacity(n);
    for _ in 0..n {
        picked.push(degrees.swap_remove(rng.random_range(0..degrees.len())));
    }
    // Degree 1 alone has ξ'' = 0; keep at least one curved term.
    if picked.iter().all(|&p| p == 1) {
        picked.push(2);
    }
    let weights: Vec<f64> = picked.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let slope = rng.random_range(0.3..4.0);
    let norm: f64 = picked.iter().zip(&weights).map(|(&p, w)| p as f64 * w).sum();
    let terms = picked.iter().zip(&weights).map(|(&p, w)| Term { p, beta_sq: w * slope / norm }).collect();
    MixtureModel::new(terms, rng.random_range(0.0..1.5)).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, max_atoms: usize) -> DiscreteMeasure {
    let k = rng.random_range(1..=max_atoms);
    let mut atoms: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    atoms.sort_by(f64::total_cmp);
    let mut cdf: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    cdf.sort_by(f64::total_cmp);
    cdf[k - 1] = 1.0;
    DiscreteMeasure::new(atoms, cdf).unwrap()
}

fn grid(model: &MixtureModel, backend: Backend) -> GridConfig {
    GridConfig::for_model(model, backend)
}

fn criterion_1() -> Outcome {
    let model = MixtureModel::sk(1.0, 0.0).unwrap();
    let mu = DiscreteMeasure::dirac(0.0).unwrap();
    let mut worst_err = 0.0_f64;
    let mut worst_time = Duration::ZERO;
    for h in [0.0, 0.5, 1.0] {
        let model = model.with_field(h).unwrap();
        let exact = log_cosh(h) + 0.5 * model.xi(1.0);
        for backend in [Backend::SemiImplicitFd, Backend::DuhamelPicard] {
            let start = Instant::now();
            let value = evaluate(&model, &mu, &grid(&model, backend)).unwrap().value;
            worst_time = worst_time.max(start.elapsed());
            worst_err = worst_err.max((value - exact).abs());
        }
    }
    Outcome {
        passed: worst_err <= 1e-5 && worst_time < Duration::from_secs(5),
        detail: format!("max |err| = {worst_err:.2e}, slowest solve {worst_time:.2?}"),
    }
}

/// Criteria 2 and 3 share the solves.
fn criteria_2_and_3() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rule = QuadratureRule::default();
    let (mut oracle_gap, mut backend_gap) = (0.0_f64, 0.0_f64);
    let mut worst_time = Duration::ZERO;
    let mut violations = Vec::new();
    let (mut max_ux, mut min_uxx, mut max_excess) = (0.0_f64, f64::INFINITY, f64::NEG_INFINITY);
    let cases = 50;
    for case in 0..cases {
        let model = random_model(&mut rng);
        let mu = random_measure(&mut rng, 3);
        let start = Instant::now();
        let oracle = cascade_value(&model, &mu, &rule).unwrap();
        let mut values = Vec::new();
        for backend in [Backend::SemiImplicitFd, Backend::DuhamelPicard] {
            let sol = pde::solve(&model, &mu, &grid(&model, backend)).unwrap();
            values.push(sol.evaluate_at(0.0, model.h()).unwrap().u);
            let mp = sol.max_principle();
            max_ux = max_ux.max(mp.max_abs_ux);
            min_uxx = min_uxx.min(mp.min_uxx);
            max_excess = max_excess.max(mp.max_uxx - mp.uxx_upper_bound);
            if !mp.holds {
                violations.push(format!("case {case} {backend:?}"));
            }
        }
        worst_time = worst_time.max(start.elapsed());
        oracle_gap = oracle_gap.max(values.iter().map(|v| (v - oracle).abs()).fold(0.0, f64::max));
        backend_gap = backend_gap.max((values[0] - values[1]).abs());
    }
    let c2 = Outcome {
        passed: oracle_gap <= 5e-4 && backend_gap <= 5e-4 && worst_time < Duration::from_secs(10),
        detail: format!(
            "{cases} cases: max |pde - oracle| = {oracle_gap:.2e}, max |fd - picard| = {backend_gap:.2e}, slowest case {worst_time:.2?}"
        ),
    };
    let c3 = Outcome {
        passed: violations.is_empty(),
        detail: format!(
            "{} solves: max |u_x| = {max_ux:.15}, min u_xx = {min_uxx:.2e}, max u_xx - bound = {max_excess:.2e}{}",
            2 * cases,
            if violations.is_empty() { String::new() } else { format!(", violations: {}", violations.join("; ")) }
        ),
    };
    (c2, c3)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failures = 0;
    let mut worst_ratio = 0.0_f64;
    for _ in 0..20 {
        let model = random_model(&mut rng);
        let mu = random_measure(&mut rng, 3);
        let nu = random_measure(&mut rng, 3);
        let r = pde::guerra_check(&model, &mu, &nu, &grid(&model, Backend::SemiImplicitFd), 1e-3).unwrap();
        if !r.passed {
            failures += 1;
        }
        worst_ratio = worst_ratio.max((r.sup_u / (r.bound_u + r.slack)).max(r.sup_ux / (r.bound_ux + r.slack)));
    }
    Outcome { passed: failures == 0, detail: format!("20 pairs, {failures} failures, max sup/bound = {worst_ratio:.3}") }
}

/// The solution used by the Monte Carlo criteria: `μ[0, s] ≥ 0.5` on `[0.4, 1]`.
fn control_case() -> (MixtureModel, DiscreteMeasure) {
    let model = MixtureModel::sk(1.0, 0.5).unwrap();
    let mu = DiscreteMeasure::new(vec![0.1, 0.4, 0.7], vec![0.2, 0.6, 1.0]).unwrap();
    (model, mu)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (model, mu) = control_case();
    let sol = pde::solve(&model, &mu, &grid(&model, Backend::SemiImplicitFd)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut policies: Vec<ControlPolicy> = (0..10)
        .map(|i| match i % 3 {
            0 => ControlPolicy::constant(rng.random_range(-1.0..1.0)),
            1 => {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                ControlPolicy::perturbed(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5), a.min(b), a.max(b))
            }
            _ => {
                let times = vec![0.0, 0.5, 1.0];
                let xs = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
                let values = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
                ControlPolicy::table(times, xs, values, 1.0).unwrap()
            }
        })
        .collect();
    policies.push(ControlPolicy::perturbed(1.0, 0.5, 0.4, 1.0));
    let report = verify_optimality(&sol, &policies, &McConfig::new(100_000, 5)).unwrap();
    let elapsed = start.elapsed();
    let shifted = &report.entries[10].gap;
    let strict = shifted.mean > 3.0 * shifted.stderr;
    let below = report.entries[..10].iter().filter(|e| e.below_value).count();
    Outcome {
        passed: report.optimal_attains_value && below == 10 && strict && elapsed < Duration::from_secs(60),
        detail: format!(
            "|E payoff(α*) - u| = {:.2e} (3σ = {:.2e}), {below}/10 suboptimal below u + 3σ, +0.5 gap = {:.3e} (3σ = {:.2e}), {elapsed:.2?}",
            (report.optimal.mean - report.u0h).abs(),
            3.0 * report.optimal.stderr,
            shifted.mean,
            3.0 * shifted.stderr
        ),
    }
}

fn criterion_6() -> Outcome {
    let (model, mu) = control_case();
    let sol = pde::solve(&model, &mu, &grid(&model, Backend::SemiImplicitFd)).unwrap();
    let r = martingale_diag(&sol, &[0.25, 0.5, 0.75, 1.0], &McConfig::new(100_000, 6)).unwrap();
    let worst = r
        .checkpoints
        .iter()
        .map(|c| c.deviation.mean.abs() / (3.0 * c.deviation.stderr))
        .fold(0.0, f64::max);
    Outcome {
        passed: r.passed,
        detail: format!(
            "max checkpoint |dev|/3σ = {worst:.3}, |u_x - E tanh X1| = {:.2e} (3σ = {:.2e})",
            (r.terminal_tanh.mean - r.ux0).abs(),
            3.0 * r.terminal_tanh.stderr
        ),
    }
}

fn criterion_7() -> Outcome {
    let (model, mu) = control_case();
    let sol = pde::solve(&model, &mu, &grid(&model, Backend::SemiImplicitFd)).unwrap();
    let r = kernel_diag(&sol, &[0.0, 0.25, 0.5, 0.75, 1.0], &McConfig::new(100_000, 7)).unwrap();
    Outcome {
        passed: r.nondecreasing && r.positive_semidefinite,
        detail: format!(
            "p = [{}], min eigenvalue = {:.3e}, trace = {:.4}",
            r.p.iter().map(|e| format!("{:.4}", e.mean)).collect::<Vec<_>>().join(", "),
            r.min_eigenvalue,
            r.trace
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = MixtureModel::sk(1.0, 0.5).unwrap();
    let mut failures = 0;
    let mut worst = 0.0_f64;
    for m in 0..5 {
        let mu = random_measure(&mut rng, 3);
        let sol = pde::solve(&model, &mu, &grid(&model, Backend::SemiImplicitFd)).unwrap();
        let probes: Vec<(f64, f64)> =
            (0..5).map(|_| (rng.random_range(0.0..0.95), rng.random_range(-1.5..1.5))).collect();
        let r = rearrangement_identity(&sol, &probes, 1e-3, &McConfig::new(20_000, 80 + m)).unwrap();
        failures += r.probes.iter().filter(|p| !p.passed).count();
        worst = worst.max(r.probes.iter().map(|p| p.residual / p.tolerance).fold(0.0, f64::max));
    }
    Outcome { passed: failures == 0, detail: format!("25 probes, {failures} failures, max residual/tolerance = {worst:.3}") }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = MixtureModel::sk(1.0, 0.5).unwrap();
    let (mut min_gap, mut min_second) = (f64::INFINITY, f64::INFINITY);
    let mut pairs = 0;
    while pairs < 10 {
        let mu = random_measure(&mut rng, 3);
        let nu = random_measure(&mut rng, 3);
        if mu.distance(&nu) < 0.1 {
            continue;
        }
        pairs += 1;
        let scan = convexity_scan(&model, &mu, &nu, 11, &Evaluator::Pde, Execution::default()).unwrap();
        min_gap = min_gap.min(scan.midpoint_gap);
        min_second = min_second.min(scan.second_differences.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Outcome {
        passed: min_gap > 2e-4 && min_second >= -2e-4,
        detail: format!("10 pairs: min midpoint gap = {min_gap:.3e}, min second difference = {min_second:.3e}"),
    }
}

fn criterion_10() -> Outcome {
    let model = MixtureModel::sk(1.44, 0.3).unwrap();
    let (_, runs) =
        minimize_weights_multistart(&model, &[0.0, 0.25, 0.5, 0.75], 5, 2024, &MinimizeOptions::default()).unwrap();
    let mut max_d = 0.0_f64;
    let mut max_dv = 0.0_f64;
    for a in &runs {
        for b in &runs {
            max_d = max_d.max(a.measure.distance(&b.measure));
            max_dv = max_dv.max((a.value - b.value).abs());
        }
    }
    Outcome {
        passed: runs.len() == 5 && max_d <= 1e-3 && max_dv <= 1e-5,
        detail: format!(
            "5 starts: max pairwise d = {max_d:.2e}, max value gap = {max_dv:.2e}, minimizer {}",
            runs[0].measure.spec_string()
        ),
    }
}

fn criterion_11() -> Outcome {
    let model = MixtureModel::sk(1.0, 0.5).unwrap();
    let mu = DiscreteMeasure::new(vec![0.3, 0.7], vec![0.4, 1.0]).unwrap();
    let mut cfg = GridConfig::with_spacing(&model, Backend::SemiImplicitFd, 0.1);
    cfg.dt_max = 0.02;
    let points = convergence_study(&model, &mu, &cfg, 2).unwrap();
    let orders = observed_orders(&points);
    Outcome {
        passed: orders.iter().all(|p| (1.7..=2.3).contains(p)),
        detail: format!(
            "errors [{}] at dx [{}], observed orders [{}]",
            points.iter().map(|p| format!("{:.3e}", p.error)).collect::<Vec<_>>().join(", "),
            points.iter().map(|p| format!("{}", p.dx)).collect::<Vec<_>>().join(", "),
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut record = |n: u32, name: &'static str, (o, elapsed): (Outcome, Duration)| {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} criterion {n:>2} {name}: {} [{elapsed:.1?}]", o.detail);
        results.push((n, name, o, elapsed));
    };
    record(1, "closed form at δ_0", timed(criterion_1));
    let ((c2, c3), shared) = {
        let start = Instant::now();
        let pair = criteria_2_and_3();
        (pair, start.elapsed())
    };
    record(2, "oracle and backend agreement", (c2, shared));
    record(3, "max principle", (c3, shared));
    record(4, "Guerra continuity", timed(criterion_4));
    record(5, "variational representation", timed(criterion_5));
    record(6, "martingale and terminal identities", timed(criterion_6));
    record(7, "kernel diagnostics", timed(criterion_7));
    record(8, "rearrangement identity", timed(criterion_8));
    record(9, "strict convexity", timed(criterion_9));
    record(10, "minimizer uniqueness", timed(criterion_10));
    record(11, "convergence order", timed(criterion_11));
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
