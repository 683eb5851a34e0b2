//! The Parisi functional `P(μ) = u_μ(0, h) − ½ ∫₀¹ ξ''(t) μ[0, t] t dt`.

use serde::{Deserialize, Serialize};

use crate::cascade::cascade_value;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;
use crate::pde::{self, GridConfig, PdeSolution};
use crate::quadrature::QuadratureRule;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParisiValue {
    pub value: f64,
    pub u0h: f64,
    pub correction: f64,
    pub solver_tol: f64,
}

impl ParisiValue {
    fn new(u0h: f64, correction: f64, solver_tol: f64) -> Self {
        Self { value: u0h - correction, u0h, correction, solver_tol }
    }

    /// `log 2 + P`, the normalization under which `ξ = 0, h = 0` gives `log 2`.
    pub fn free_energy(&self) -> f64 {
        std::f64::consts::LN_2 + self.value
    }
}

/// `½ ∫₀¹ ξ''(t) μ[0, t] t dt`, integrated exactly on each constant piece of the CDF.
pub fn correction_integral(model: &MixtureModel, mu: &DiscreteMeasure) -> f64 {
    let f = |t: f64| model.t_xi_second_antiderivative(t);
    0.5 * mu
        .segments()
        .iter()
        .filter(|s| s.cdf > 0.0)
        .map(|s| s.cdf * (f(s.end) - f(s.start)))
        .sum::<f64>()
}

/// `P(μ)` read from a solution computed for the same model and measure.
pub fn parisi_value(model: &MixtureModel, mu: &DiscreteMeasure, sol: &PdeSolution) -> Result<ParisiValue> {
    if sol.model().terms() != model.terms() || sol.measure() != mu {
        return Err(Error::Usage("solution was computed for a different model or measure".into()));
    }
    if model.h().abs() > sol.half_width() {
        return Err(Error::Usage(format!(
            "field h = {} lies outside the solution grid [-{L}, {L}]",
            model.h(),
            L = sol.half_width()
        )));
    }
    let u0h = sol.evaluate_at(0.0, model.h())?.u;
    Ok(ParisiValue::new(u0h, correction_integral(model, mu), sol.tolerance()))
}

/// Solves the PDE on `cfg` and evaluates `P(μ)`.
pub fn evaluate(model: &MixtureModel, mu: &DiscreteMeasure, cfg: &GridConfig) -> Result<ParisiValue> {
    let sol = pde::solve(model, mu, cfg)?;
    parisi_value(model, mu, &sol)
}

/// `P(μ)` with `u_μ(0, h)` from the cascade recursion.
pub fn cascade_parisi_value(model: &MixtureModel, mu: &DiscreteMeasure, rule: &QuadratureRule) -> Result<ParisiValue> {
    let u0h = cascade_value(model, mu, rule)?;
    Ok(ParisiValue::new(u0h, correction_integral(model, mu), 1e-10))
}

/// `P(δ_q)` in closed form up to one Gaussian quadrature:
/// `E log cosh(h + sqrt(ξ'(q) − ξ'(0)) Z) + ½(ξ(1) − ξ(q) − (1 − q) ξ'(q))`.
pub fn replica_symmetric_value(model: &MixtureModel, q: f64, rule: &QuadratureRule) -> f64 {
    let v = model.variance_between(0.0, q);
    let e = rule.expect(crate::quadrature::log_cosh, v, model.h());
    e + 0.5 * (model.xi(1.0) - model.xi(q) - (1.0 - q) * model.xi_prime(q))
}

/// JSON record of one evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParisiSummary {
    pub value: f64,
    pub u0h: f64,
    pub correction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_energy: Option<f64>,
    pub model: MixtureModel,
    pub measure: DiscreteMeasure,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub solver: f64,
    pub picard: f64,
}

impl ParisiSummary {
    pub fn new(
        value: &ParisiValue,
        model: &MixtureModel,
        mu: &DiscreteMeasure,
        grid: &GridConfig,
        include_log2: bool,
    ) -> Self {
        Self {
            value: value.value,
            u0h: value.u0h,
            correction: value.correction,
            free_energy: include_log2.then(|| value.free_energy()),
            model: model.clone(),
            measure: mu.clone(),
            grid: grid.clone(),
            tolerances: Tolerances { solver: value.solver_tol, picard: grid.picard.tol },
        }
    }
}
