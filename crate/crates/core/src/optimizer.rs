//! Minimization of the Parisi functional over atomic measures.
//!
//! On a fixed set of atoms the functional is convex in the CDF values
//! `m₀ ≤ … ≤ m_{k−1} ≤ m_k = 1`, which are optimized by projected cyclic
//! coordinate Newton steps with central finite differences. Atom locations
//! are handled by compass search with restarts.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::functional::{cascade_parisi_value, evaluate};
use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;
use crate::pde::{Backend, GridConfig};
use crate::quadrature::QuadratureRule;
use crate::rng::path_stream;

/// How each objective value is computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluator {
    /// A PDE solve on the default grid for the model.
    #[default]
    Pde,
    /// A PDE solve with the given grid; knots are added per call.
    PdeGrid { grid: GridConfig },
    /// The cascade recursion.
    Cascade,
}

/// `P` with a cache keyed by the canonical measure. `knots` are always
/// included in the time partition, so nearby measures share one grid.
pub struct Objective {
    model: MixtureModel,
    knots: Vec<f64>,
    evaluator: Evaluator,
    rule: QuadratureRule,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl Objective {
    pub fn new(model: &MixtureModel, knots: &[f64], evaluator: Evaluator) -> Self {
        Self {
            model: model.clone(),
            knots: knots.to_vec(),
            evaluator,
            rule: QuadratureRule::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn value(&self, mu: &DiscreteMeasure) -> Result<f64> {
        let key: Vec<u64> = mu.atoms().iter().chain(mu.cdf_values()).map(|v| v.to_bits()).collect();
        if let Some(&v) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = match &self.evaluator {
            Evaluator::Pde => {
                let cfg = GridConfig::for_model(&self.model, Backend::SemiImplicitFd).with_knots(&self.knots);
                evaluate(&self.model, mu, &cfg)?.value
            }
            Evaluator::PdeGrid { grid } => evaluate(&self.model, mu, &grid.clone().with_knots(&self.knots))?.value,
            Evaluator::Cascade => cascade_parisi_value(&self.model, mu, &self.rule)?.value,
        };
        self.cache.lock().expect("cache poisoned").insert(key, v);
        Ok(v)
    }

    pub fn evaluations(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop once a full sweep lowers the value by at most this much.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step on CDF values.
    pub fd_step: f64,
    pub evaluator: Evaluator,
    pub execution: Execution,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, fd_step: 1e-3, evaluator: Evaluator::Pde, execution: Execution::Parallel }
    }
}

impl MinimizeOptions {
    pub fn with_tol(mut self, tol: f64, max_iter: usize) -> Self {
        self.tol = tol;
        self.max_iter = max_iter;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub measure: DiscreteMeasure,
    pub value: f64,
    /// `(iteration, value)`, nonincreasing.
    pub trace: Vec<(usize, f64)>,
    pub starts: usize,
    /// Largest pairwise distance between restart results.
    pub spread: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub evaluations: usize,
    /// Values of every restart, in start order.
    pub start_values: Vec<f64>,
}

impl MinimizeResult {
    /// CSV `iter,value`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,value")?;
        for (i, v) in &self.trace {
            writeln!(out, "{i},{}", crate::format::sig17(*v))?;
        }
        Ok(())
    }
}

fn check_atoms(atoms: &[f64]) -> Result<()> {
    if atoms.is_empty() || atoms.windows(2).any(|w| w[0] >= w[1]) || atoms.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Domain("fixed atoms must be nonempty, strictly increasing and in [0, 1]".into()));
    }
    Ok(())
}

fn measure_of(atoms: &[f64], free: &[f64]) -> Result<DiscreteMeasure> {
    let mut cdf = free.to_vec();
    cdf.push(1.0);
    DiscreteMeasure::new(atoms.to_vec(), cdf)
}

/// Minimizes over CDF values on `fixed_atoms`, starting from equal masses.
pub fn minimize_weights(
    model: &MixtureModel,
    fixed_atoms: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MinimizeResult> {
    let opts = MinimizeOptions::default().with_tol(tol, max_iter);
    minimize_weights_from(model, fixed_atoms, None, &opts)
}

/// As [`minimize_weights`] from the free CDF values `start` (length `k − 1`).
pub fn minimize_weights_from(
    model: &MixtureModel,
    fixed_atoms: &[f64],
    start: Option<&[f64]>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    check_atoms(fixed_atoms)?;
    let objective = Objective::new(model, fixed_atoms, opts.evaluator.clone());
    let n = fixed_atoms.len() - 1;
    let m0: Vec<f64> = match start {
        Some(s) => {
            if s.len() != n || s.iter().any(|v| !(0.0..=1.0).contains(v)) || s.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Domain(format!("start must be {n} nondecreasing CDF values in [0, 1]")));
            }
            s.to_vec()
        }
        None => (1..=n).map(|i| i as f64 / (n + 1) as f64).collect(),
    };
    let run = coordinate_descent(&objective, fixed_atoms, m0, opts)?;
    Ok(MinimizeResult {
        measure: measure_of(fixed_atoms, &run.m)?,
        value: run.value,
        trace: run.trace,
        starts: 1,
        spread: 0.0,
        converged: run.converged,
        warning: (!run.converged).then(|| format!("max_iter = {} reached before tol", opts.max_iter)),
        evaluations: objective.evaluations(),
        start_values: vec![run.value],
    })
}

/// Runs [`minimize_weights_from`] from `starts` random CDF vectors drawn from
/// `seed` and returns the best, with the spread of all results.
pub fn minimize_weights_multistart(
    model: &MixtureModel,
    fixed_atoms: &[f64],
    starts: usize,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<(MinimizeResult, Vec<MinimizeResult>)> {
    check_atoms(fixed_atoms)?;
    if starts == 0 {
        return Err(Error::Config("at least one start is required".into()));
    }
    let n = fixed_atoms.len() - 1;
    let inits: Vec<Vec<f64>> = (0..starts).map(|s| random_cdf(seed, s as u64, n)).collect();
    let runs = map_indexed(opts.execution, starts, |s| minimize_weights_from(model, fixed_atoms, Some(&inits[s]), opts));
    let runs: Vec<MinimizeResult> = runs.into_iter().collect::<Result<_>>()?;
    Ok((combine(&runs), runs))
}

fn random_cdf(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = path_stream(seed, stream);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn combine(runs: &[MinimizeResult]) -> MinimizeResult {
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut spread = 0.0_f64;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            spread = spread.max(runs[i].measure.distance(&runs[j].measure));
        }
    }
    let mut out = runs[best].clone();
    out.starts = runs.len();
    out.spread = spread;
    out.converged = runs.iter().all(|r| r.converged);
    out.evaluations = runs.iter().map(|r| r.evaluations).sum();
    out.start_values = runs.iter().map(|r| r.value).collect();
    if !out.converged && out.warning.is_none() {
        out.warning = Some("some restarts reached max_iter".into());
    }
    out
}

struct Descent {
    m: Vec<f64>,
    value: f64,
    trace: Vec<(usize, f64)>,
    converged: bool,
}

fn coordinate_descent(objective: &Objective, atoms: &[f64], mut m: Vec<f64>, opts: &MinimizeOptions) -> Result<Descent> {
    let f = |m: &[f64]| -> Result<f64> { objective.value(&measure_of(atoms, m)?) };
    let mut value = f(&m)?;
    let mut trace = vec![(0, value)];
    let n = m.len();
    let mut converged = n == 0;
    for iter in 1..=opts.max_iter {
        if n == 0 {
            break;
        }
        let before = value;
        for i in 0..n {
            let group = [i];
            if let Some((mm, v)) = line_step(&f, &m, &group, value, opts)? {
                m = mm;
                value = v;
            }
        }
        for group in tie_groups(&m) {
            if let Some((mm, v)) = line_step(&f, &m, &group, value, opts)? {
                m = mm;
                value = v;
            }
        }
        trace.push((iter, value));
        if before - value <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(Descent { m, value, trace, converged })
}

/// Maximal runs of at least two equal coordinates.
fn tie_groups(m: &[f64]) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=m.len() {
        if i == m.len() || m[i] != m[start] {
            if i - start >= 2 {
                groups.push((start..i).collect());
            }
            start = i;
        }
    }
    groups
}

/// One projected Newton step moving all coordinates in `group` together.
/// Returns the new point only on strict decrease.
fn line_step<F>(f: &F, m: &[f64], group: &[usize], f0: f64, opts: &MinimizeOptions) -> Result<Option<(Vec<f64>, f64)>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let first = group[0];
    let last = group[group.len() - 1];
    let lo = if first == 0 { 0.0 } else { m[first - 1] } - m[first];
    let hi = if last + 1 == m.len() { 1.0 } else { m[last + 1] } - m[last];
    let h = opts.fd_step;
    if hi - lo < 2.0 * h {
        return Ok(None);
    }
    let shifted = |s: f64| -> Vec<f64> {
        let mut v = m.to_vec();
        for &g in group {
            v[g] += s;
        }
        // Keep the ordering exact after rounding.
        for g in first..=last {
            v[g] = v[g].clamp(m[first] + lo, m[last] + hi);
        }
        v
    };
    let offsets: [f64; 2] = if lo > -h {
        [h, 2.0 * h]
    } else if hi < h {
        [-h, -2.0 * h]
    } else {
        [-h, h]
    };
    let probes = map_indexed(opts.execution, 2, |j| f(&shifted(offsets[j])));
    let (fa, fb) = match (&probes[0], &probes[1]) {
        (Ok(a), Ok(b)) => (*a, *b),
        (Err(e), _) | (_, Err(e)) => return Err(e.clone()),
    };
    let (grad, curv) = if offsets[0] < 0.0 && offsets[1] > 0.0 {
        ((fb - fa) / (2.0 * h), (fa - 2.0 * f0 + fb) / (h * h))
    } else {
        let s = offsets[0].signum();
        (s * (-3.0 * f0 + 4.0 * fa - fb) / (2.0 * h), (f0 - 2.0 * fa + fb) / (h * h))
    };
    if grad == 0.0 {
        return Ok(None);
    }
    let mut step = if curv > 0.0 { -grad / curv } else { -grad.signum() * 0.25 * (hi - lo) };
    for _ in 0..30 {
        let s = step.clamp(lo, hi);
        if s.abs() < 1e-14 {
            break;
        }
        let cand = shifted(s);
        let v = f(&cand)?;
        if v < f0 {
            return Ok(Some((cand, v)));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Joint search over `k` atom locations and their CDF values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    pub weights: MinimizeOptions,
    /// Initial compass step on atom locations.
    pub initial_step: f64,
    /// Compass search stops once the step is below this.
    pub location_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            weights: MinimizeOptions::default().with_tol(1e-9, 30),
            initial_step: 0.1,
            location_tol: 1e-3,
            max_rounds: 60,
            seed: 0,
        }
    }
}

/// Alternates the convex weight step with compass search on the `k` atom
/// locations, from `starts` random initial placements.
pub fn minimize_joint(model: &MixtureModel, k: usize, starts: usize, tol: f64, max_iter: usize) -> Result<MinimizeResult> {
    let mut opts = JointOptions::default();
    opts.weights = opts.weights.with_tol(tol, max_iter);
    minimize_joint_with(model, k, starts, &opts)
}

pub fn minimize_joint_with(model: &MixtureModel, k: usize, starts: usize, opts: &JointOptions) -> Result<MinimizeResult> {
    if k == 0 || starts == 0 {
        return Err(Error::Config("minimize_joint needs k >= 1 atoms and at least one start".into()));
    }
    let runs = map_indexed(opts.weights.execution, starts, |s| {
        let mut rng = path_stream(opts.seed, s as u64);
        let mut q: Vec<f64> = if s == 0 {
            (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect()
        } else {
            (0..k).map(|_| rng.random::<f64>()).collect()
        };
        q.sort_by(f64::total_cmp);
        joint_run(model, q, opts)
    });
    let runs: Vec<MinimizeResult> = runs.into_iter().collect::<Result<_>>()?;
    Ok(combine(&runs))
}

fn joint_run(model: &MixtureModel, mut q: Vec<f64>, opts: &JointOptions) -> Result<MinimizeResult> {
    let separate = |q: &[f64]| q.windows(2).all(|w| w[1] - w[0] >= 1e-9);
    if !separate(&q) {
        let k = q.len();
        q = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
    }
    let mut evaluations = 0;
    let mut inner = |q: &[f64], start: Option<&[f64]>| -> Result<MinimizeResult> {
        let r = minimize_weights_from(model, q, start, &opts.weights)?;
        evaluations += r.evaluations;
        Ok(r)
    };
    let free = |r: &MinimizeResult, q: &[f64]| -> Vec<f64> {
        q[..q.len() - 1].iter().map(|&t| r.measure.cdf_unchecked(t)).collect()
    };
    let mut best = inner(&q, None)?;
    let mut m = free(&best, &q);
    let mut trace = vec![(0, best.value)];
    let mut step = opts.initial_step;
    let mut round = 0;
    while step >= opts.location_tol && round < opts.max_rounds {
        round += 1;
        let mut improved = false;
        for i in 0..q.len() {
            for dir in [-1.0, 1.0] {
                let mut cand = q.clone();
                cand[i] = (cand[i] + dir * step).clamp(0.0, 1.0);
                if cand[i] == q[i] || !separate(&cand) {
                    continue;
                }
                let run = inner(&cand, Some(&m))?;
                if run.value < best.value {
                    m = free(&run, &cand);
                    q = cand;
                    best = run;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
        trace.push((round, best.value));
    }
    let converged = step < opts.location_tol;
    Ok(MinimizeResult {
        measure: best.measure.clone(),
        value: best.value,
        trace,
        starts: 1,
        spread: 0.0,
        converged,
        warning: (!converged).then(|| "location search reached max_rounds".to_string()),
        evaluations,
        start_values: vec![best.value],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityScan {
    pub distance: f64,
    /// `(θ, P(θμ + (1 − θ)ν))`.
    pub points: Vec<(f64, f64)>,
    pub second_differences: Vec<f64>,
    /// `½(P(μ) + P(ν)) − P(½μ + ½ν)`.
    pub midpoint_gap: f64,
}

/// `P` along the segment `θ ↦ θμ + (1 − θ)ν` at `n_theta` equispaced θ.
/// The union of atoms of both endpoints is used as knots for every solve.
pub fn convexity_scan(
    model: &MixtureModel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    n_theta: usize,
    evaluator: &Evaluator,
    execution: Execution,
) -> Result<ConvexityScan> {
    if n_theta < 3 {
        return Err(Error::Config("a convexity scan needs at least three points".into()));
    }
    let knots: Vec<f64> = mu.atoms().iter().chain(nu.atoms()).copied().collect();
    let objective = Objective::new(model, &knots, evaluator.clone());
    let thetas: Vec<f64> = (0..n_theta).map(|i| i as f64 / (n_theta - 1) as f64).collect();
    let mut extra = thetas.clone();
    extra.push(0.5);
    let values = map_indexed(execution, extra.len(), |i| objective.value(&DiscreteMeasure::mix(extra[i], mu, nu)?));
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let mid = values[n_theta];
    let points: Vec<(f64, f64)> = thetas.iter().copied().zip(values[..n_theta].iter().copied()).collect();
    let second_differences = points.windows(3).map(|w| w[0].1 - 2.0 * w[1].1 + w[2].1).collect();
    let midpoint_gap = 0.5 * (points[0].1 + points[n_theta - 1].1) - mid;
    Ok(ConvexityScan { distance: mu.distance(nu), points, second_differences, midpoint_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::replica_symmetric_value;
    use crate::quadrature::log_cosh;

    #[test]
    fn constant_objective_keeps_the_start() {
        let model = MixtureModel::new(vec![], 0.4).unwrap();
        let atoms = [0.0, 0.5, 1.0];
        let opts = MinimizeOptions::default();
        let r = minimize_weights_from(&model, &atoms, Some(&[0.2, 0.7]), &opts).unwrap();
        assert_eq!(r.measure, DiscreteMeasure::new(atoms.to_vec(), vec![0.2, 0.7, 1.0]).unwrap());
        assert!((r.value - log_cosh(0.4)).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn weights_reach_the_one_atom_envelope() {
        let model = MixtureModel::sk(0.09, 0.0).unwrap();
        let rule = QuadratureRule::default();
        let scan = (0..=100).map(|i| replica_symmetric_value(&model, i as f64 / 100.0, &rule)).fold(f64::INFINITY, f64::min);
        let r = minimize_weights(&model, &[0.0, 0.25, 0.5, 0.75], 1e-10, 50).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(r.value <= scan + 1e-5, "{} vs {scan}", r.value);
        assert!((r.value - scan).abs() < 1e-4);
    }

    #[test]
    fn tie_groups_are_maximal_runs() {
        assert_eq!(tie_groups(&[0.1, 0.3, 0.3, 0.3, 0.5, 0.5]), vec![vec![1, 2, 3], vec![4, 5]]);
        assert!(tie_groups(&[0.1, 0.2]).is_empty());
    }

    #[test]
    fn scan_endpoints_and_degenerate_segment() {
        let model = MixtureModel::sk(1.0, 0.0).unwrap();
        let mu = DiscreteMeasure::dirac(0.0).unwrap();
        let nu = DiscreteMeasure::dirac(1.0).unwrap();
        let knots = [0.0, 1.0];
        let obj = Objective::new(&model, &knots, Evaluator::Pde);
        let s = convexity_scan(&model, &mu, &nu, 11, &Evaluator::Pde, Execution::Parallel).unwrap();
        assert_eq!(s.points[10].1, obj.value(&mu).unwrap());
        assert_eq!(s.points[0].1, obj.value(&nu).unwrap());
        assert!(s.second_differences.iter().all(|&d| d >= -2e-4));
        let flat = convexity_scan(&model, &mu, &mu, 5, &Evaluator::Pde, Execution::Parallel).unwrap();
        assert!(flat.points.iter().all(|p| p.1 == flat.points[0].1));
    }

    #[test]
    fn trace_csv() {
        let r = MinimizeResult {
            measure: DiscreteMeasure::dirac(0.0).unwrap(),
            value: 0.5,
            trace: vec![(0, 0.5)],
            starts: 1,
            spread: 0.0,
            converged: true,
            warning: None,
            evaluations: 1,
            start_values: vec![0.5],
        };
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,value\n0,0.50000000000000000\n");
    }
}
