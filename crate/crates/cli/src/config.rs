//! Command-line flags, optional TOML file, and the resolved run configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use parisi_core::pde::{Backend, GridConfig, DEFAULT_DX};
use parisi_core::{DiscreteMeasure, Error, MixtureModel, Result};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "parisi", version, about = "Parisi PDE solver and Parisi functional toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Solve,
    Eval,
    Rsb,
    Minimize,
    Verify,
    Convexity,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the PDE and dump the grid as CSV.
    Solve(Flags),
    /// Evaluate the Parisi functional with the PDE solver.
    Eval(Flags),
    /// Evaluate the Parisi functional with the cascade recursion.
    Rsb(Flags),
    /// Minimize over CDF values on fixed atoms, or jointly over k atoms.
    Minimize(Flags),
    /// Run the property suite; exits 2 if any check fails.
    Verify(Flags),
    /// Scan the functional along the segment between two measures.
    Convexity(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Solve(f) => (CommandKind::Solve, f),
            Command::Eval(f) => (CommandKind::Eval, f),
            Command::Rsb(f) => (CommandKind::Rsb, f),
            Command::Minimize(f) => (CommandKind::Minimize, f),
            Command::Verify(f) => (CommandKind::Verify, f),
            Command::Convexity(f) => (CommandKind::Convexity, f),
        }
    }
}

/// Every flag is optional so that a config file can supply it.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Mixture as `p:beta_sq` pairs, e.g. `2:1.0,4:0.5`.
    #[arg(long)]
    pub xi: Option<String>,
    /// External field.
    #[arg(long)]
    pub h: Option<f64>,
    /// Measure as `q:m` pairs, e.g. `0.3:0.4,0.8:1.0`.
    #[arg(long)]
    pub measure: Option<String>,
    /// Second measure for `convexity` and `verify`.
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long = "grid-L")]
    #[serde(rename = "grid_L")]
    pub grid_l: Option<f64>,
    #[arg(long = "grid-nx")]
    pub grid_nx: Option<usize>,
    #[arg(long)]
    pub dt_max: Option<f64>,
    /// `semi_implicit_fd` or `duhamel_picard`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, env = "PARISI_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report `log 2 + P` instead of `P`.
    #[arg(long)]
    #[serde(default)]
    pub include_log2: bool,
    /// Fixed atoms for `minimize`, e.g. `0,0.25,0.5`.
    #[arg(long)]
    pub atoms: Option<String>,
    /// Number of free atoms for joint minimization.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Gauss–Hermite order for `rsb`.
    #[arg(long)]
    pub order: Option<usize>,
    /// Write the minimizer trace as CSV `iter,value`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Print the JSON record on standard output.
    #[arg(long)]
    #[serde(default)]
    pub json: bool,
    /// TOML file with the same keys (underscored); flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Flags {
    /// Fills unset flags from the config file, if any.
    pub fn merged(self) -> Result<Flags> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_file(&path)?;
        Ok(Flags {
            xi: self.xi.or(file.xi),
            h: self.h.or(file.h),
            measure: self.measure.or(file.measure),
            nu: self.nu.or(file.nu),
            grid_l: self.grid_l.or(file.grid_l),
            grid_nx: self.grid_nx.or(file.grid_nx),
            dt_max: self.dt_max.or(file.dt_max),
            backend: self.backend.or(file.backend),
            paths: self.paths.or(file.paths),
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            include_log2: self.include_log2 || file.include_log2,
            atoms: self.atoms.or(file.atoms),
            k: self.k.or(file.k),
            starts: self.starts.or(file.starts),
            tol: self.tol.or(file.tol),
            max_iter: self.max_iter.or(file.max_iter),
            n_theta: self.n_theta.or(file.n_theta),
            order: self.order.or(file.order),
            trace: self.trace.or(file.trace),
            json: self.json || file.json,
            config: Some(path),
        })
    }
}

fn read_file(path: &Path) -> Result<Flags> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("config file {}: {e}", path.display())))
}

/// Everything a run depends on, after defaults are applied.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub subcommand: CommandKind,
    pub xi: String,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<String>,
    pub grid: GridConfig,
    pub paths: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub include_log2: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub starts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub n_theta: usize,
    pub order: usize,
    #[serde(skip)]
    pub trace: Option<PathBuf>,
    #[serde(skip)]
    pub json: bool,
    #[serde(skip)]
    pub model: MixtureModel,
}

impl RunConfig {
    pub fn resolve(subcommand: CommandKind, flags: Flags) -> Result<Self> {
        let flags = flags.merged()?;
        let xi = flags.xi.ok_or_else(|| Error::Usage("--xi is required".into()))?;
        let h = flags.h.unwrap_or(0.0);
        let model = MixtureModel::parse(&xi, h)?;
        let needs_measure = matches!(
            subcommand,
            CommandKind::Solve | CommandKind::Eval | CommandKind::Rsb | CommandKind::Verify | CommandKind::Convexity
        );
        if needs_measure && flags.measure.is_none() {
            return Err(Error::Usage("--measure is required".into()));
        }
        if subcommand == CommandKind::Convexity && flags.nu.is_none() {
            return Err(Error::Usage("--nu is required for convexity".into()));
        }
        for spec in flags.measure.iter().chain(&flags.nu) {
            DiscreteMeasure::parse(spec)?;
        }
        let atoms = flags.atoms.as_deref().map(parse_atoms).transpose()?;
        if subcommand == CommandKind::Minimize && atoms.is_some() == flags.k.is_some() {
            return Err(Error::Usage("minimize needs exactly one of --atoms or --k".into()));
        }
        let backend: Backend = match flags.backend.as_deref() {
            Some(b) => b.parse()?,
            None => Backend::default(),
        };
        let mut grid = GridConfig::for_model(&model, backend);
        match (flags.grid_l, flags.grid_nx) {
            (Some(l), Some(nx)) => {
                grid.half_width = l;
                grid.nx = nx;
            }
            (Some(l), None) => {
                let cells = (l / DEFAULT_DX).ceil().max(1.0) as usize;
                grid.half_width = l;
                grid.nx = 2 * cells + 1;
            }
            (None, Some(nx)) => grid.nx = nx,
            (None, None) => {}
        }
        if let Some(dt) = flags.dt_max {
            grid.dt_max = dt;
        }
        grid.validate()?;
        if h.abs() > grid.half_width {
            return Err(Error::Config(format!("|h| = {h} exceeds the grid half-width {}", grid.half_width)));
        }
        let order = flags.order.unwrap_or(64);
        parisi_core::quadrature::QuadratureRule::gauss_hermite(order)?;
        Ok(Self {
            subcommand,
            xi,
            h,
            measure: flags.measure,
            nu: flags.nu,
            grid,
            paths: flags.paths.unwrap_or(20_000),
            seed: flags.seed.unwrap_or(0),
            out: flags.out,
            include_log2: flags.include_log2,
            atoms,
            k: flags.k,
            starts: flags.starts.unwrap_or(3),
            tol: flags.tol.unwrap_or(1e-10),
            max_iter: flags.max_iter.unwrap_or(100),
            n_theta: flags.n_theta.unwrap_or(11),
            order,
            trace: flags.trace,
            json: flags.json,
            model,
        })
    }

    pub fn mu(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::parse(self.measure.as_deref().unwrap_or_default())
    }

    pub fn nu(&self) -> Result<Option<DiscreteMeasure>> {
        self.nu.as_deref().map(DiscreteMeasure::parse).transpose()
    }
}

fn parse_atoms(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("invalid atom `{s}`"))))
        .collect()
}
