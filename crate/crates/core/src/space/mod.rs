//! Finite and analytic asymmetric distance spaces.
//!
//! A [`FiniteSpace`] is a list of labeled points with a resolved distance
//! table: explicit overrides win, otherwise the default formula is applied to
//! the point values. It may also carry a continuum interval, in which case
//! unlabeled points with values in that interval belong to the space and are
//! measured with the default formula. This is how mixed examples such as
//! `A ∪ [lo, hi]` are realized: `A` and a grid on the interval are labeled,
//! and iterates of a self-map may land anywhere in the interval.
//!
//! An [`AnalyticSpace`] is a closed interval with a closed-form distance.

mod axioms;
mod file;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Formula;

pub use axioms::{
    check_b_rectangular, check_identity_axiom, classify, minimal_rectangular_coefficient,
    AsymmetryWitness, Classification, IdentityReport, IdentityViolation, IdentityViolationKind,
    MinimalS, Outcome, QuadrupleViolation, RectangularReport, ScanOptions, TriangleWitness,
};
pub use file::{OverrideEntry, SpaceFile, SpaceKind};

/// Absolute slack tolerance used by every inequality check.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub label: String,
    pub value: f64,
}

impl Point {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Point {
            label: label.into(),
            value,
        }
    }

    /// A point named by its own value, used for analytic and continuum points.
    pub fn from_value(value: f64) -> Self {
        Point {
            label: value_label(value),
            value,
        }
    }
}

pub fn value_label(value: f64) -> String {
    format!("{value}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpace(format!(
                "interval [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// `m` evenly spaced values including both endpoints.
    pub fn grid(&self, m: usize) -> Vec<f64> {
        match m {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => (0..m)
                .map(|i| {
                    if i == m - 1 {
                        self.hi
                    } else {
                        self.lo + (self.hi - self.lo) * i as f64 / (m - 1) as f64
                    }
                })
                .collect(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone)]
pub struct FiniteSpace {
    points: Vec<Point>,
    index: HashMap<String, usize>,
    by_value: HashMap<u64, usize>,
    default: Option<Formula>,
    overrides: Vec<OverrideEntry>,
    table: Vec<f64>,
    continuum: Option<Interval>,
    claimed_s: Option<f64>,
}

impl FiniteSpace {
    pub fn new(
        points: Vec<Point>,
        default: Option<&str>,
        overrides: Vec<OverrideEntry>,
        continuum: Option<Interval>,
        claimed_s: Option<f64>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpace("a finite space needs at least one point".into()));
        }
        check_claimed_s(claimed_s)?;
        let mut index = HashMap::new();
        let mut by_value = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if !p.value.is_finite() {
                return Err(Error::InvalidSpace(format!(
                    "point `{}` has non-finite value",
                    p.label
                )));
            }
            if index.insert(p.label.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate label `{}`", p.label)));
            }
            by_value.entry(p.value.to_bits()).or_insert(i);
        }
        let default = default
            .map(|src| Formula::parse(src, &["x", "y"]).map_err(|e| Error::parse(src, e)))
            .transpose()?;
        let n = points.len();
        let mut explicit: Vec<Option<f64>> = vec![None; n * n];
        for o in &overrides {
            let i = *index
                .get(&o.from)
                .ok_or_else(|| Error::UnknownLabel(o.from.clone()))?;
            let j = *index
                .get(&o.to)
                .ok_or_else(|| Error::UnknownLabel(o.to.clone()))?;
            if !(o.d.is_finite() && o.d >= 0.0) {
                return Err(Error::BadDistance {
                    from: o.from.clone(),
                    to: o.to.clone(),
                    value: o.d,
                });
            }
            if i == j && o.d != 0.0 {
                return Err(Error::InvalidSpace(format!(
                    "override ({0}, {0}) must be 0",
                    o.from
                )));
            }
            if explicit[i * n + j].replace(o.d).is_some() {
                return Err(Error::InvalidSpace(format!(
                    "duplicate override ({}, {})",
                    o.from, o.to
                )));
            }
        }
        let mut table = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = match (explicit[i * n + j], &default) {
                    (Some(d), _) => d,
                    (None, Some(f)) => eval_distance(f, &points[i], &points[j])?,
                    (None, None) => {
                        return Err(Error::NoDistance {
                            from: points[i].label.clone(),
                            to: points[j].label.clone(),
                        })
                    }
                };
                table[i * n + j] = d;
            }
        }
        Ok(FiniteSpace {
            points,
            index,
            by_value,
            default,
            overrides,
            table,
            continuum,
            claimed_s,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn claimed_s(&self) -> Option<f64> {
        self.claimed_s
    }

    pub fn continuum(&self) -> Option<Interval> {
        self.continuum
    }

    pub fn default_formula(&self) -> Option<&Formula> {
        self.default.as_ref()
    }

    pub fn overrides(&self) -> &[OverrideEntry] {
        &self.overrides
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Distance between registered points by index.
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.table[i * self.points.len() + j]
    }

    /// Override first, then the default formula; `(p, p)` is always 0.
    pub fn resolve_distance(&self, from: &str, to: &str) -> Result<f64> {
        let i = self
            .index_of(from)
            .ok_or_else(|| Error::UnknownLabel(from.to_string()))?;
        let j = self
            .index_of(to)
            .ok_or_else(|| Error::UnknownLabel(to.to_string()))?;
        Ok(self.d(i, j))
    }

    fn locate(&self, p: &Point) -> Result<Option<usize>> {
        if let Some(i) = self.index_of(&p.label) {
            return Ok(Some(i));
        }
        match self.continuum {
            Some(c) if c.contains(p.value) => Ok(None),
            _ => Err(Error::UnknownLabel(p.label.clone())),
        }
    }

    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        match (self.locate(a)?, self.locate(b)?) {
            (Some(i), Some(j)) => Ok(self.d(i, j)),
            _ if a.label == b.label => Ok(0.0),
            _ => match &self.default {
                Some(f) => eval_distance(f, a, b),
                None => Err(Error::NoDistance {
                    from: a.label.clone(),
                    to: b.label.clone(),
                }),
            },
        }
    }

    /// The registered point with exactly this value, else a continuum point.
    pub fn point_at(&self, value: f64) -> Result<Point> {
        if let Some(&i) = self.by_value.get(&value.to_bits()) {
            return Ok(self.points[i].clone());
        }
        match self.continuum {
            Some(c) if c.contains(value) => Ok(Point::from_value(value)),
            _ => Err(Error::OutsideSpace(value_label(value))),
        }
    }
}

fn eval_distance(f: &Formula, a: &Point, b: &Point) -> Result<f64> {
    let d = f.eval(&[a.value, b.value])?;
    if d < 0.0 {
        return Err(Error::BadDistance {
            from: a.label.clone(),
            to: b.label.clone(),
            value: d,
        });
    }
    Ok(d)
}

fn check_claimed_s(s: Option<f64>) -> Result<()> {
    match s {
        Some(s) if !(s.is_finite() && s >= 1.0) => Err(Error::InvalidSpace(format!(
            "claimed_s = {s} must be a finite real >= 1"
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct AnalyticSpace {
    domain: Interval,
    forward: Formula,
    claimed_s: Option<f64>,
}

impl AnalyticSpace {
    pub fn new(domain: Interval, forward: &str, claimed_s: Option<f64>) -> Result<Self> {
        check_claimed_s(claimed_s)?;
        let forward = Formula::parse(forward, &["x", "y"]).map_err(|e| Error::parse(forward, e))?;
        Ok(AnalyticSpace {
            domain,
            forward,
            claimed_s,
        })
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn forward(&self) -> &Formula {
        &self.forward
    }

    pub fn claimed_s(&self) -> Option<f64> {
        self.claimed_s
    }

    pub fn eta(&self, x: f64, y: f64) -> Result<f64> {
        eval_distance(&self.forward, &Point::from_value(x), &Point::from_value(y))
    }

    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        for p in [a, b] {
            if !self.domain.contains(p.value) {
                return Err(Error::OutsideSpace(p.label.clone()));
            }
        }
        eval_distance(&self.forward, a, b)
    }

    pub fn point_at(&self, value: f64) -> Result<Point> {
        if self.domain.contains(value) {
            Ok(Point::from_value(value))
        } else {
            Err(Error::OutsideSpace(value_label(value)))
        }
    }
}

#[derive(Debug, Clone)]
pub enum Space {
    Finite(FiniteSpace),
    Analytic(AnalyticSpace),
}

impl From<FiniteSpace> for Space {
    fn from(s: FiniteSpace) -> Self {
        Space::Finite(s)
    }
}

impl From<AnalyticSpace> for Space {
    fn from(s: AnalyticSpace) -> Self {
        Space::Analytic(s)
    }
}

impl Space {
    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        match self {
            Space::Finite(s) => s.distance(a, b),
            Space::Analytic(s) => s.distance(a, b),
        }
    }

    pub fn point_at(&self, value: f64) -> Result<Point> {
        match self {
            Space::Finite(s) => s.point_at(value),
            Space::Analytic(s) => s.point_at(value),
        }
    }

    /// Resolves a point by label, then as a number or `p/q` fraction.
    pub fn point(&self, spec: &str) -> Result<Point> {
        if let Space::Finite(s) = self {
            if let Some(i) = s.index_of(spec) {
                return Ok(s.points[i].clone());
            }
        }
        let value = parse_number(spec)
            .ok_or_else(|| Error::UnknownLabel(spec.to_string()))?;
        self.point_at(value)
    }

    pub fn claimed_s(&self) -> Option<f64> {
        match self {
            Space::Finite(s) => s.claimed_s(),
            Space::Analytic(s) => s.claimed_s(),
        }
    }

    pub fn as_finite(&self) -> Option<&FiniteSpace> {
        match self {
            Space::Finite(s) => Some(s),
            Space::Analytic(_) => None,
        }
    }

    pub fn as_analytic(&self) -> Option<&AnalyticSpace> {
        match self {
            Space::Analytic(s) => Some(s),
            Space::Finite(_) => None,
        }
    }

    /// The finite point set that exhaustive scans run over: the registered
    /// points of a finite space, or an `m`-point grid of an analytic one.
    pub fn carrier(&self, m: usize) -> Result<Carrier> {
        match self {
            Space::Finite(s) => Ok(Carrier {
                points: s.points.clone(),
                table: s.table.clone(),
            }),
            Space::Analytic(s) => {
                let points: Vec<Point> =
                    s.domain.grid(m).into_iter().map(Point::from_value).collect();
                let mut table = Vec::with_capacity(points.len() * points.len());
                for a in &points {
                    for b in &points {
                        table.push(s.distance(a, b)?);
                    }
                }
                Ok(Carrier { points, table })
            }
        }
    }

    /// Seeded random points; analytic spaces only.
    pub(crate) fn random_points(&self, count: usize, seed: u64) -> Vec<Point> {
        match self {
            Space::Analytic(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| Point::from_value(s.domain.sample(&mut rng)))
                    .collect()
            }
            Space::Finite(_) => Vec::new(),
        }
    }
}

pub fn parse_number(spec: &str) -> Option<f64> {
    let spec = spec.trim();
    if let Some((n, d)) = spec.split_once('/') {
        let n: f64 = n.trim().parse().ok()?;
        let d: f64 = d.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d);
    }
    spec.parse().ok().filter(|v: &f64| v.is_finite())
}

/// A finite point list with its dense distance matrix.
#[derive(Debug, Clone)]
pub struct Carrier {
    pub points: Vec<Point>,
    table: Vec<f64>,
}

impl Carrier {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.table[i * self.points.len() + j]
    }
}

/// How analytic spaces are sampled: an exhaustive `grid`-point mesh plus
/// `random` seeded draws. Finite spaces are always scanned exhaustively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub grid: usize,
    pub random: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            grid: 40,
            random: 10_000,
            seed: 0,
        }
    }
}

impl Sampling {
    pub fn describe(&self, space: &Space) -> String {
        match space {
            Space::Finite(s) => format!("exhaustive over {} points", s.len()),
            Space::Analytic(_) => format!(
                "grid {} + {} random (chacha8, seed {})",
                self.grid, self.random, self.seed
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FiniteSpace {
        FiniteSpace::new(
            vec![Point::new("a", 0.0), Point::new("b", 1.0), Point::new("c", 3.0)],
            Some("(x - y)^2"),
            vec![OverrideEntry::new("a", "b", 0.5)],
            Some(Interval::new(1.0, 3.0).unwrap()),
            None,
        )
        .unwrap()
    }

    #[test]
    fn override_then_default() {
        let s = tiny();
        assert_eq!(s.resolve_distance("a", "b").unwrap(), 0.5);
        assert_eq!(s.resolve_distance("b", "a").unwrap(), 1.0);
        assert_eq!(s.resolve_distance("a", "c").unwrap(), 9.0);
        assert_eq!(s.resolve_distance("c", "c").unwrap(), 0.0);
        assert!(matches!(
            s.resolve_distance("a", "zz"),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn continuum_points_use_default() {
        let s = tiny();
        let p = s.point_at(2.0).unwrap();
        assert_eq!(p.label, "2");
        assert_eq!(s.distance(&p, &s.points()[2]).unwrap(), 1.0);
        assert_eq!(s.distance(&p, &p).unwrap(), 0.0);
        // an exact value match returns the registered point
        assert_eq!(s.point_at(3.0).unwrap().label, "c");
        assert!(matches!(s.point_at(0.5), Err(Error::OutsideSpace(_))));
    }

    #[test]
    fn construction_errors() {
        let pts = || vec![Point::new("a", 0.0), Point::new("b", 1.0)];
        assert!(matches!(
            FiniteSpace::new(pts(), None, vec![], None, None),
            Err(Error::NoDistance { .. })
        ));
        assert!(matches!(
            FiniteSpace::new(pts(), Some("x - y"), vec![], None, None),
            Err(Error::BadDistance { .. })
        ));
        assert!(matches!(
            FiniteSpace::new(pts(), Some("1"), vec![OverrideEntry::new("a", "a", 1.0)], None, None),
            Err(Error::InvalidSpace(_))
        ));
        assert!(matches!(
            FiniteSpace::new(
                vec![Point::new("a", 0.0), Point::new("a", 1.0)],
                Some("1"),
                vec![],
                None,
                None
            ),
            Err(Error::InvalidSpace(_))
        ));
        assert!(matches!(
            FiniteSpace::new(pts(), Some("1"), vec![], None, Some(0.5)),
            Err(Error::InvalidSpace(_))
        ));
        assert!(matches!(
            FiniteSpace::new(pts(), Some("(x - y"), vec![], None, None),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn resolution_is_deterministic() {
        let s = tiny();
        for a in ["a", "b", "c"] {
            for b in ["a", "b", "c"] {
                let d1 = s.resolve_distance(a, b).unwrap();
                let d2 = s.resolve_distance(a, b).unwrap();
                assert_eq!(d1.to_bits(), d2.to_bits());
            }
        }
    }

    #[test]
    fn point_lookup_by_label_or_number() {
        let space = Space::from(tiny());
        assert_eq!(space.point("b").unwrap().value, 1.0);
        assert_eq!(space.point("5/2").unwrap().value, 2.5);
        assert!(space.point("nope").is_err());
        let analytic = Space::from(
            AnalyticSpace::new(Interval::new(1.0, 2.0).unwrap(), "abs(x - y)", None).unwrap(),
        );
        assert_eq!(analytic.point("1.5").unwrap().value, 1.5);
        assert!(analytic.point("3").is_err());
    }

    #[test]
    fn interval_grid_hits_endpoints() {
        let g = Interval::new(1.0, 2.0).unwrap().grid(11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[10], 2.0);
        assert_eq!(g[5], 1.5);
    }
}
