use serde::{Deserialize, Serialize};

use super::GridConfig;
use crate::cascade::cascade_value;
use crate::error::Result;
use crate::measure::DiscreteMeasure;
use crate::mixture::MixtureModel;
use crate::quadrature::QuadratureRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub dx: f64,
    pub dt_max: f64,
    pub value: f64,
    pub error: f64,
}

/// Solves on `cfg` and on `refinements` successive halvings of `dx` and
/// `dt_max` at fixed half-width, measuring `|u(0,h) − cascade_value|`.
pub fn convergence_study(
    model: &MixtureModel,
    mu: &DiscreteMeasure,
    cfg: &GridConfig,
    refinements: usize,
) -> Result<Vec<ConvergencePoint>> {
    cfg.validate()?;
    let oracle = cascade_value(model, mu, &QuadratureRule::default())?;
    let mut out = Vec::with_capacity(refinements + 1);
    let mut level = cfg.clone();
    for k in 0..=refinements {
        if k > 0 {
            level.nx = 2 * (level.nx - 1) + 1;
            level.dt_max *= 0.5;
        }
        let sol = super::solve(model, mu, &level)?;
        let value = sol.evaluate_at(0.0, model.h())?.u;
        out.push(ConvergencePoint { dx: level.dx(), dt_max: level.dt_max, value, error: (value - oracle).abs() });
    }
    Ok(out)
}

/// `log(e_k / e_{k+1}) / log(dx_k / dx_{k+1})` for consecutive points.
pub fn observed_orders(points: &[ConvergencePoint]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[0].error / w[1].error).ln() / (w[0].dx / w[1].dx).ln())
        .collect()
}
