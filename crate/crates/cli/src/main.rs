mod config;
mod output;
mod verify;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use parisi_core::format::sig17;
use parisi_core::functional::{cascade_parisi_value, evaluate, ParisiSummary};
use parisi_core::optimizer::{convexity_scan, minimize_joint_with, minimize_weights_multistart, Evaluator, JointOptions, MinimizeOptions};
use parisi_core::quadrature::QuadratureRule;
use parisi_core::{pde, Error, Execution};
use serde::Serialize;
use serde_json::json;

use config::{Cli, CommandKind, RunConfig};
use output::to_json;

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

/// Exit codes: 0 success, 1 invalid input, 2 numerical failure.
fn run<I: IntoIterator<Item = OsString>>(argv: I) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (kind, flags) = cli.command.split();
    let cfg = match RunConfig::resolve(kind, flags) {
        Ok(cfg) => cfg,
        Err(e) => return report(&e.into(), None),
    };
    match dispatch(&cfg) {
        Ok(code) => code,
        Err(e) => report(&e, Some(&cfg)),
    }
}

fn report(err: &anyhow::Error, cfg: Option<&RunConfig>) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => {
            let residual = match e {
                Error::Solver { residual, .. } => Some(*residual),
                _ => None,
            };
            let record = json!({ "error": e.to_string(), "residual": residual, "config": cfg });
            println!("{}", to_json(&record));
            eprintln!("error: {e}");
            2
        }
        _ => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn dispatch(cfg: &RunConfig) -> anyhow::Result<u8> {
    match cfg.subcommand {
        CommandKind::Solve => solve(cfg),
        CommandKind::Eval => eval(cfg, false),
        CommandKind::Rsb => eval(cfg, true),
        CommandKind::Minimize => minimize(cfg),
        CommandKind::Convexity => convexity(cfg),
        CommandKind::Verify => verify::run(cfg),
    }
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(cfg: &RunConfig, body: T, to_stdout: bool) -> anyhow::Result<()> {
    let text = to_json(&Record { config: cfg, body });
    if to_stdout {
        println!("{text}");
    }
    if let Some(path) = cfg.out.as_ref().filter(|_| cfg.subcommand != CommandKind::Solve) {
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn solve(cfg: &RunConfig) -> anyhow::Result<u8> {
    let mu = cfg.mu()?;
    let sol = pde::solve(&cfg.model, &mu, &cfg.grid)?;
    if let Some(path) = &cfg.out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        sol.write_csv(&mut w)?;
        w.flush()?;
    }
    let point = sol.evaluate_at(0.0, cfg.h)?;
    let body = json!({
        "u0h": point.u,
        "ux0h": point.ux,
        "uxx0h": point.uxx,
        "diagnostics": sol.diagnostics(),
        "max_principle": sol.max_principle(),
        "times": sol.times().len(),
        "nodes": sol.xs().len(),
    });
    write_json(cfg, body, true)?;
    Ok(0)
}

fn eval(cfg: &RunConfig, cascade: bool) -> anyhow::Result<u8> {
    let mu = cfg.mu()?;
    let value = if cascade {
        cascade_parisi_value(&cfg.model, &mu, &QuadratureRule::gauss_hermite(cfg.order)?)?
    } else {
        evaluate(&cfg.model, &mu, &cfg.grid)?
    };
    let summary = ParisiSummary::new(&value, &cfg.model, &mu, &cfg.grid, cfg.include_log2);
    if !cfg.json {
        let shown = if cfg.include_log2 { value.free_energy() } else { value.value };
        println!("{}", sig17(shown));
    }
    write_json(cfg, summary, cfg.json)?;
    Ok(0)
}

fn minimize(cfg: &RunConfig) -> anyhow::Result<u8> {
    let weights = MinimizeOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        evaluator: Evaluator::PdeGrid { grid: cfg.grid.clone() },
        ..MinimizeOptions::default()
    };
    let result = if let Some(atoms) = &cfg.atoms {
        minimize_weights_multistart(&cfg.model, atoms, cfg.starts, cfg.seed, &weights)?.0
    } else {
        let opts = JointOptions { weights, seed: cfg.seed, ..JointOptions::default() };
        minimize_joint_with(&cfg.model, cfg.k.unwrap_or(1), cfg.starts, &opts)?
    };
    if let Some(path) = &cfg.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        result.write_trace_csv(BufWriter::new(file))?;
    }
    if !cfg.json {
        println!("{}", sig17(result.value));
        println!("{}", result.measure.spec_string());
    }
    write_json(cfg, json!({ "result": result }), cfg.json)?;
    Ok(0)
}

fn convexity(cfg: &RunConfig) -> anyhow::Result<u8> {
    let mu = cfg.mu()?;
    let nu = cfg.nu()?.expect("checked during resolution");
    let scan = convexity_scan(
        &cfg.model,
        &mu,
        &nu,
        cfg.n_theta,
        &Evaluator::PdeGrid { grid: cfg.grid.clone() },
        Execution::Parallel,
    )?;
    write_json(cfg, json!({ "scan": scan }), true)?;
    Ok(0)
}
