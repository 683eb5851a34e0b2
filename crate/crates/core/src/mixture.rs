//! The mixture `ξ(t) = Σ β_p² t^p`, the external field, and the time change
//! `s(t) = ½(ξ'(1) − ξ'(t))` that turns the Parisi PDE into a forward
//! semilinear heat equation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One term `β_p² t^p` of the mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub p: u32,
    pub beta_sq: f64,
}

/// `ξ`, `ξ'` and `ξ''` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiValues {
    pub xi: f64,
    pub xi_prime: f64,
    pub xi_second: f64,
}

/// A mixed p-spin model: the mixture coefficients and the external field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    terms: Vec<Term>,
    h: f64,
}

impl MixtureModel {
    /// Builds a model, sorting terms by degree and rejecting duplicate degrees,
    /// `p = 0`, negative or non-finite coefficients, and negative fields.
    pub fn new(mut terms: Vec<Term>, h: f64) -> Result<Self> {
        if !h.is_finite() || h < 0.0 {
            return Err(Error::Domain(format!("external field must be finite and >= 0, got {h}")));
        }
        for term in &terms {
            if term.p == 0 {
                return Err(Error::Domain("mixture degrees must be >= 1".into()));
            }
            if !term.beta_sq.is_finite() || term.beta_sq < 0.0 {
                return Err(Error::Domain(format!(
                    "coefficient of t^{} must be finite and >= 0, got {}",
                    term.p, term.beta_sq
                )));
            }
        }
        terms.sort_by_key(|t| t.p);
        if terms.windows(2).any(|w| w[0].p == w[1].p) {
            return Err(Error::Domain("mixture degrees must be distinct".into()));
        }
        Ok(Self { terms, h })
    }

    /// The Sherrington–Kirkpatrick mixture `β² t²`.
    pub fn sk(beta_sq: f64, h: f64) -> Result<Self> {
        Self::new(vec![Term { p: 2, beta_sq }], h)
    }

    /// Parses a mixture of the form `2:1.0,4:0.5`; the empty string is `ξ = 0`.
    pub fn parse(spec: &str, h: f64) -> Result<Self> {
        let mut terms = Vec::new();
        for piece in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (p, b) = piece
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected `p:beta_sq`, got `{piece}`")))?;
            let p = p
                .trim()
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("bad degree `{p}`: {e}")))?;
            let beta_sq = b
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad coefficient `{b}`: {e}")))?;
            terms.push(Term { p, beta_sq });
        }
        Self::new(terms, h)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// A copy with a different external field.
    pub fn with_field(&self, h: f64) -> Result<Self> {
        Self::new(self.terms.clone(), h)
    }

    /// The mixture string in the same format accepted by [`MixtureModel::parse`].
    pub fn spec_string(&self) -> String {
        self.terms
            .iter()
            .map(|t| format!("{}:{:?}", t.p, t.beta_sq))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// `(ξ(t), ξ'(t), ξ''(t))` for `t ∈ [0, 1]`.
    pub fn xi_eval(&self, t: f64) -> Result<XiValues> {
        check_unit(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> XiValues {
        let mut v = XiValues { xi: 0.0, xi_prime: 0.0, xi_second: 0.0 };
        for &Term { p, beta_sq } in &self.terms {
            let pf = p as f64;
            v.xi += beta_sq * t.powi(p as i32);
            v.xi_prime += pf * beta_sq * t.powi(p as i32 - 1);
            if p >= 2 {
                v.xi_second += pf * (pf - 1.0) * beta_sq * t.powi(p as i32 - 2);
            }
        }
        v
    }

    pub fn xi(&self, t: f64) -> f64 {
        self.eval_unchecked(t).xi
    }

    pub fn xi_prime(&self, t: f64) -> f64 {
        self.eval_unchecked(t).xi_prime
    }

    pub fn xi_second(&self, t: f64) -> f64 {
        self.eval_unchecked(t).xi_second
    }

    /// `∫ t ξ''(t) dt = t ξ'(t) − ξ(t)`, used by the correction term.
    pub(crate) fn t_xi_second_antiderivative(&self, t: f64) -> f64 {
        let v = self.eval_unchecked(t);
        t * v.xi_prime - v.xi
    }

    /// Total variance `ξ'(1) − ξ'(0)` accumulated over `[0, 1]`.
    pub fn total_variance(&self) -> f64 {
        self.xi_prime(1.0) - self.xi_prime(0.0)
    }

    /// The changed-time horizon `s(0) = ½(ξ'(1) − ξ'(0))`.
    pub fn horizon(&self) -> f64 {
        0.5 * self.total_variance()
    }

    /// `s(t) = ½(ξ'(1) − ξ'(t))`.
    pub fn time_change(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(self.time_change_unchecked(t))
    }

    pub(crate) fn time_change_unchecked(&self, t: f64) -> f64 {
        0.5 * (self.xi_prime(1.0) - self.xi_prime(t))
    }

    /// Inverse of the time change on `[0, s(0)]`.
    ///
    /// When the preimage is an interval (only possible for `ξ'' ≡ 0`) the
    /// largest preimage is returned.
    pub fn time_change_inverse(&self, s: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !(s.is_finite() && (0.0..=horizon * (1.0 + 1e-14) + 1e-300).contains(&s)) {
            return Err(Error::Domain(format!("changed time {s} outside [0, {horizon}]")));
        }
        Ok(self.time_change_inverse_unchecked(s.min(horizon)))
    }

    pub(crate) fn time_change_inverse_unchecked(&self, s: f64) -> f64 {
        // Largest t with ξ'(t) <= ξ'(1) − 2s; ξ' is nondecreasing.
        let target = self.xi_prime(1.0) - 2.0 * s;
        if self.xi_prime(1.0) <= target {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.xi_prime(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Variance of the Brownian part over `[a, b]`: `ξ'(b) − ξ'(a)`.
    pub(crate) fn variance_between(&self, a: f64, b: f64) -> f64 {
        (self.xi_prime(b) - self.xi_prime(a)).max(0.0)
    }
}

impl fmt::Display for MixtureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "xi=[{}], h={}", self.spec_string(), self.h)
    }
}

impl FromStr for MixtureModel {
    type Err = Error;

    /// Parses the mixture with zero external field.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 0.0)
    }
}

pub(crate) fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("time {t} outside [0, 1]")))
    }
}
