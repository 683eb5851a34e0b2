//! Atomic probability measures on `[0, 1]`, stored through their step CDF.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::check_unit;

/// A probability measure with finitely many atoms, `μ[0,t] = m_i` for
/// `t ∈ [q_i, q_{i+1})` and `0` for `t < q_0`.
///
/// Always held in canonical form: every atom carries positive mass, so two
/// measures are equal exactly when their distance is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    atoms: Vec<f64>,
    cdf: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(raw.atoms, raw.cdf)
    }
}

impl From<DiscreteMeasure> for RawMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        RawMeasure { atoms: m.atoms, cdf: m.cdf }
    }
}

/// A maximal interval `[start, end)` on which the CDF is constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub cdf: f64,
}

impl DiscreteMeasure {
    /// Validates and canonicalizes. A final CDF value within `1e-12` of one is
    /// snapped to one.
    pub fn new(atoms: Vec<f64>, mut cdf: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != cdf.len() {
            return Err(Error::Domain(format!(
                "need matching non-empty atom and cdf lists, got {} and {}",
                atoms.len(),
                cdf.len()
            )));
        }
        for &q in &atoms {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Domain(format!("atom {q} outside [0, 1]")));
            }
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("atoms must be strictly increasing".into()));
        }
        if cdf.iter().any(|m| !(0.0..=1.0 + 1e-12).contains(m)) {
            return Err(Error::Domain("cdf values must lie in [0, 1]".into()));
        }
        if cdf.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("cdf values must be nondecreasing".into()));
        }
        let last = cdf.last_mut().unwrap();
        if (*last - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("last cdf value must be 1, got {last}")));
        }
        *last = 1.0;

        let mut out_atoms = Vec::with_capacity(atoms.len());
        let mut out_cdf = Vec::with_capacity(cdf.len());
        let mut prev = 0.0;
        for (q, m) in atoms.into_iter().zip(cdf) {
            if m > prev {
                out_atoms.push(q);
                out_cdf.push(m.min(1.0));
                prev = m;
            }
        }
        Ok(Self { atoms: out_atoms, cdf: out_cdf })
    }

    /// The point mass at `q`.
    pub fn dirac(q: f64) -> Result<Self> {
        Self::new(vec![q], vec![1.0])
    }

    /// Parses `q:m` pairs such as `0.3:0.4,0.8:1.0`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut cdf = Vec::new();
        for piece in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (q, m) = piece
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected `q:m`, got `{piece}`")))?;
            atoms.push(q.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad atom `{q}`: {e}")))?);
            cdf.push(m.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad cdf value `{m}`: {e}")))?);
        }
        if atoms.is_empty() {
            return Err(Error::Parse("empty measure".into()));
        }
        Self::new(atoms, cdf)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(q_i, μ{q_i})` pairs.
    pub fn masses(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut prev = 0.0;
        self.atoms.iter().zip(&self.cdf).map(move |(&q, &m)| {
            let w = m - prev;
            prev = m;
            (q, w)
        })
    }

    /// `μ[0, t]` for `t ∈ [0, 1]`.
    pub fn cdf_at(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(self.cdf_unchecked(t))
    }

    pub(crate) fn cdf_unchecked(&self, t: f64) -> f64 {
        match self.atoms.partition_point(|&q| q <= t) {
            0 => 0.0,
            i => self.cdf[i - 1],
        }
    }

    /// The left limit `μ[0, t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match self.atoms.partition_point(|&q| q < t) {
            0 => 0.0,
            i => self.cdf[i - 1],
        }
    }

    /// The constant pieces of the CDF covering `[0, 1]`, including a leading
    /// zero piece when `q_0 > 0`. Empty pieces are omitted.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::with_capacity(self.atoms.len() + 1);
        if self.atoms[0] > 0.0 {
            out.push(Segment { start: 0.0, end: self.atoms[0], cdf: 0.0 });
        }
        for i in 0..self.atoms.len() {
            let end = self.atoms.get(i + 1).copied().unwrap_or(1.0);
            if end > self.atoms[i] {
                out.push(Segment { start: self.atoms[i], end, cdf: self.cdf[i] });
            }
        }
        out
    }

    /// `∫₀¹ |μ[0,s] − ν[0,s]| ds`, integrated exactly.
    pub fn distance(&self, other: &Self) -> f64 {
        let knots = merged_knots(&self.atoms, &other.atoms);
        knots
            .windows(2)
            .map(|w| (self.cdf_unchecked(w[0]) - other.cdf_unchecked(w[0])).abs() * (w[1] - w[0]))
            .sum()
    }

    /// The measure with CDF `θ·μ + (1−θ)·ν`.
    pub fn mix(theta: f64, mu: &Self, nu: &Self) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain(format!("mixing weight {theta} outside [0, 1]")));
        }
        let mut atoms: Vec<f64> = mu.atoms.iter().chain(&nu.atoms).copied().collect();
        atoms.sort_by(f64::total_cmp);
        atoms.dedup();
        let cdf = atoms
            .iter()
            .map(|&q| {
                let a = mu.cdf_unchecked(q);
                let b = nu.cdf_unchecked(q);
                // Exact at theta in {0, 1} and for equal inputs.
                if a == b {
                    a
                } else {
                    theta * a + (1.0 - theta) * b
                }
            })
            .collect();
        Self::new(atoms, cdf)
    }

    /// The measure in `q:m` text form.
    pub fn spec_string(&self) -> String {
        self.atoms
            .iter()
            .zip(&self.cdf)
            .map(|(q, m)| format!("{q:?}:{m:?}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for DiscreteMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec_string())
    }
}

impl FromStr for DiscreteMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Sorted union of atoms of both measures together with `0` and `1`.
fn merged_knots(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut knots: Vec<f64> = std::iter::once(0.0)
        .chain(a.iter().copied())
        .chain(b.iter().copied())
        .chain(std::iter::once(1.0))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d(q: f64) -> DiscreteMeasure {
        DiscreteMeasure::dirac(q).unwrap()
    }

    #[test]
    fn point_masses() {
        assert_eq!(d(0.0).cdf_at(0.7).unwrap(), 1.0);
        assert_eq!(d(1.0).cdf_at(0.7).unwrap(), 0.0);
        assert_eq!(d(0.3).cdf_at(0.3).unwrap(), 1.0);
        assert_eq!(d(0.3).cdf_left(0.3), 0.0);
        assert!(d(0.3).cdf_at(1.2).is_err());
    }

    #[test]
    fn distances() {
        assert_eq!(d(0.0).distance(&d(1.0)), 1.0);
        assert_eq!(d(0.4).distance(&d(0.4)), 0.0);
        assert_eq!(d(0.0).distance(&d(0.5)), 0.5);
    }

    #[test]
    fn mixing() {
        let m = DiscreteMeasure::mix(0.5, &d(0.0), &d(1.0)).unwrap();
        assert_eq!(m.atoms(), &[0.0, 1.0]);
        assert_eq!(m.cdf_values(), &[0.5, 1.0]);

        let m = DiscreteMeasure::mix(0.3, &d(0.0), &d(0.5)).unwrap();
        assert_relative_eq!(m.cdf_at(0.2).unwrap(), 0.3);
        assert_eq!(m.cdf_at(0.5).unwrap(), 1.0);

        let mu = DiscreteMeasure::parse("0.2:0.3,0.7:1").unwrap();
        assert_eq!(DiscreteMeasure::mix(0.37, &mu, &mu).unwrap(), mu);
        assert_eq!(DiscreteMeasure::mix(1.0, &mu, &d(0.5)).unwrap(), mu);
    }

    #[test]
    fn canonical_form_merges_flat_steps() {
        let m = DiscreteMeasure::new(vec![0.1, 0.2, 0.5, 0.9], vec![0.0, 0.4, 0.4, 1.0]).unwrap();
        assert_eq!(m.atoms(), &[0.2, 0.9]);
        assert_eq!(m.cdf_values(), &[0.4, 1.0]);
    }

    #[test]
    fn rejects_invalid() {
        assert!(DiscreteMeasure::new(vec![0.5, 0.2], vec![0.5, 1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.2, 0.5], vec![0.7, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![0.2], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![1.2], vec![1.0]).is_err());
        assert!(DiscreteMeasure::parse("0.3").is_err());
        assert!(DiscreteMeasure::parse("").is_err());
    }

    #[test]
    fn parse_round_trip() {
        let m = DiscreteMeasure::parse("0.3:0.4, 0.8:1.0").unwrap();
        assert_eq!(m.atoms(), &[0.3, 0.8]);
        assert_eq!(DiscreteMeasure::parse(&m.spec_string()).unwrap(), m);
    }

    #[test]
    fn segments_cover_unit_interval() {
        let m = DiscreteMeasure::parse("0.3:0.4,0.8:1").unwrap();
        let s = m.segments();
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].start, s[0].end, s[0].cdf), (0.0, 0.3, 0.0));
        assert_eq!((s[2].start, s[2].end, s[2].cdf), (0.8, 1.0, 1.0));
        assert_eq!(d(1.0).segments().len(), 1);
    }

    pub(crate) fn arb_measure() -> impl Strategy<Value = DiscreteMeasure> {
        proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..5).prop_map(|pairs| {
            let mut atoms: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let mut cdf: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            atoms.sort_by(f64::total_cmp);
            atoms.dedup();
            cdf.truncate(atoms.len());
            cdf.sort_by(f64::total_cmp);
            *cdf.last_mut().unwrap() = 1.0;
            DiscreteMeasure::new(atoms, cdf).unwrap()
        })
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in arb_measure(), b in arb_measure(), c in arb_measure()) {
            let ab = a.distance(&b);
            prop_assert!((ab - b.distance(&a)).abs() < 1e-15);
            prop_assert!(ab <= a.distance(&c) + c.distance(&b) + 1e-14);
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn mixing_is_affine(a in arb_measure(), b in arb_measure(), theta in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let m = DiscreteMeasure::mix(theta, &a, &b).unwrap();
            let expect = theta * a.cdf_unchecked(t) + (1.0 - theta) * b.cdf_unchecked(t);
            prop_assert!((m.cdf_unchecked(t) - expect).abs() < 1e-15);
            prop_assert!((m.distance(&b) - theta * a.distance(&b)).abs() < 1e-14);
        }
    }
}
