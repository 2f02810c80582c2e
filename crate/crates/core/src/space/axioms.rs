//! Axiom scans: identity, symmetry, triangle and the b-rectangular
//! (quadrilateral) inequality, plus the tightest coefficient and a full
//! classification.
//!
//! A quadruple `(x, u, v, y)` is admissible when `u != v` and both differ from
//! `x` and `y`. Quadruples with `x == y` are skipped since their left side is 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Carrier, Sampling, Space, DEFAULT_TOL};
use crate::error::Result;
use crate::report::{ext_float, ext_float_opt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Absolute slack tolerance.
    pub tol: f64,
    /// Upper bound on stored witnesses; counts are always exact.
    pub witness_cap: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            tol: DEFAULT_TOL,
            witness_cap: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    VacuousPass,
    Fail,
}

impl Outcome {
    pub fn passed(self) -> bool {
        self != Outcome::Fail
    }
}

/// A quadruple with its two sides. `ratio` is `lhs / rhs_sum`, infinite when
/// `rhs_sum == 0 < lhs`. Used both for violations and for the quadruple
/// attaining the largest ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrupleViolation {
    pub index: u64,
    pub x: String,
    pub u: String,
    pub v: String,
    pub y: String,
    pub lhs: f64,
    pub rhs_sum: f64,
    #[serde(with = "ext_float")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangularReport {
    pub s: f64,
    pub tol: f64,
    pub source: String,
    pub outcome: Outcome,
    pub checked: u64,
    pub violation_count: u64,
    pub violations: Vec<QuadrupleViolation>,
    #[serde(with = "ext_float_opt")]
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MinimalS {
    /// No admissible quadruple exists.
    Undefined,
    Finite {
        value: f64,
        witness: Option<QuadrupleViolation>,
    },
    /// Some quadruple has `rhs_sum == 0 < lhs`; no finite coefficient works.
    Infinite { witness: QuadrupleViolation },
}

impl MinimalS {
    pub fn value(&self) -> Option<f64> {
        match self {
            MinimalS::Undefined => None,
            MinimalS::Finite { value, .. } => Some(*value),
            MinimalS::Infinite { .. } => Some(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityViolationKind {
    /// `d(x, y) == 0` with `x != y`.
    ZeroOffDiagonal,
    /// `d(p, p) != 0`.
    NonzeroDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityViolation {
    pub x: String,
    pub y: String,
    pub d: f64,
    pub kind: IdentityViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub source: String,
    pub passed: bool,
    pub checked_pairs: u64,
    pub violation_count: u64,
    pub violations: Vec<IdentityViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryWitness {
    pub x: String,
    pub y: String,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleWitness {
    pub x: String,
    pub z: String,
    pub y: String,
    pub lhs: f64,
    pub rhs_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub s: f64,
    pub tol: f64,
    pub source: String,
    pub is_quasi_identity: bool,
    pub is_symmetric: bool,
    pub satisfies_triangle: bool,
    pub is_metric: bool,
    pub is_b_metric: bool,
    pub is_rectangular: bool,
    pub is_rqb: bool,
    pub minimal_s: MinimalS,
    pub identity_violations: Vec<IdentityViolation>,
    pub asymmetry_count: u64,
    pub asymmetry_witnesses: Vec<AsymmetryWitness>,
    pub triangle_witness: Option<TriangleWitness>,
    pub b_triangle_witness: Option<TriangleWitness>,
    pub rectangular_witness: Option<QuadrupleViolation>,
    pub rqb_witness: Option<QuadrupleViolation>,
}

struct Scan {
    checked: u64,
    violation_count: u64,
    violations: Vec<QuadrupleViolation>,
    best: Option<QuadrupleViolation>,
}

impl Scan {
    fn empty() -> Self {
        Scan {
            checked: 0,
            violation_count: 0,
            violations: Vec::new(),
            best: None,
        }
    }

    /// Folds one quadruple in; `make` builds the witness lazily.
    fn visit(
        &mut self,
        lhs: f64,
        rhs: f64,
        s: f64,
        opts: &ScanOptions,
        make: impl Fn(Option<f64>) -> QuadrupleViolation,
    ) {
        self.checked += 1;
        let ratio = ratio(lhs, rhs);
        let violated = lhs > s * rhs + opts.tol;
        if violated {
            self.violation_count += 1;
            if self.violations.len() < opts.witness_cap {
                self.violations.push(make(ratio));
            }
        }
        if let Some(r) = ratio {
            if self.best.as_ref().is_none_or(|b| r > b.ratio) {
                self.best = Some(make(Some(r)));
            }
        }
    }

    fn merge(&mut self, other: Scan, cap: usize) {
        self.checked += other.checked;
        self.violation_count += other.violation_count;
        let room = cap.saturating_sub(self.violations.len());
        self.violations
            .extend(other.violations.into_iter().take(room));
        if let Some(b) = other.best {
            if self.best.as_ref().is_none_or(|cur| b.ratio > cur.ratio) {
                self.best = Some(b);
            }
        }
    }
}

/// `None` for 0/0 (no information), `+inf` for positive/0.
fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if rhs > 0.0 {
        Some(lhs / rhs)
    } else if lhs > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

fn quad(
    index: u64,
    labels: [&str; 4],
    lhs: f64,
    rhs_sum: f64,
    ratio: Option<f64>,
) -> QuadrupleViolation {
    QuadrupleViolation {
        index,
        x: labels[0].to_string(),
        u: labels[1].to_string(),
        v: labels[2].to_string(),
        y: labels[3].to_string(),
        lhs,
        rhs_sum,
        ratio: ratio.unwrap_or(f64::NAN),
    }
}

fn scan_carrier(c: &Carrier, s: f64, opts: &ScanOptions) -> Scan {
    let n = c.len();
    let nn = n as u64;
    let parts: Vec<Scan> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut local = Scan::empty();
            for y in 0..n {
                if y == x {
                    continue;
                }
                let lhs = c.d(x, y);
                for u in 0..n {
                    if u == x || u == y {
                        continue;
                    }
                    let dxu = c.d(x, u);
                    for v in 0..n {
                        if v == x || v == y || v == u {
                            continue;
                        }
                        let rhs = dxu + c.d(u, v) + c.d(v, y);
                        let index = ((x as u64 * nn + y as u64) * nn + u as u64) * nn + v as u64;
                        local.visit(lhs, rhs, s, opts, |r| {
                            quad(
                                index,
                                [
                                    &c.points[x].label,
                                    &c.points[u].label,
                                    &c.points[v].label,
                                    &c.points[y].label,
                                ],
                                lhs,
                                rhs,
                                r,
                            )
                        });
                    }
                }
            }
            local
        })
        .collect();
    let mut total = Scan::empty();
    for p in parts {
        total.merge(p, opts.witness_cap);
    }
    total
}

fn scan(space: &Space, s: f64, sampling: &Sampling, opts: &ScanOptions) -> Result<Scan> {
    let carrier = space.carrier(sampling.grid)?;
    let mut total = scan_carrier(&carrier, s, opts);
    if let Space::Analytic(_) = space {
        let base = (carrier.len() as u64).pow(4);
        let pts = space.random_points(4 * sampling.random, sampling.seed);
        for (k, q) in pts.chunks_exact(4).enumerate() {
            let (x, u, v, y) = (&q[0], &q[1], &q[2], &q[3]);
            let admissible = x.value != y.value
                && u.value != v.value
                && ![x.value, y.value].contains(&u.value)
                && ![x.value, y.value].contains(&v.value);
            if !admissible {
                continue;
            }
            let lhs = space.distance(x, y)?;
            let rhs = space.distance(x, u)? + space.distance(u, v)? + space.distance(v, y)?;
            let labels = [&*x.label, &*u.label, &*v.label, &*y.label];
            total.visit(lhs, rhs, s, opts, |r| quad(base + k as u64, labels, lhs, rhs, r));
        }
    }
    Ok(total)
}

/// Checks `d(x, y) <= s * (d(x, u) + d(u, v) + d(v, y)) + tol` over every
/// admissible quadruple of the source.
pub fn check_b_rectangular(
    space: &Space,
    s: f64,
    sampling: &Sampling,
    opts: &ScanOptions,
) -> Result<RectangularReport> {
    let sc = scan(space, s, sampling, opts)?;
    Ok(rectangular_report(space, s, sampling, opts, sc))
}

fn rectangular_report(
    space: &Space,
    s: f64,
    sampling: &Sampling,
    opts: &ScanOptions,
    sc: Scan,
) -> RectangularReport {
    let outcome = if sc.checked == 0 {
        Outcome::VacuousPass
    } else if sc.violation_count == 0 {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    RectangularReport {
        s,
        tol: opts.tol,
        source: sampling.describe(space),
        outcome,
        checked: sc.checked,
        violation_count: sc.violation_count,
        violations: sc.violations,
        max_ratio: sc.best.as_ref().map(|b| b.ratio),
    }
}

/// Supremum of `lhs / rhs_sum` over admissible quadruples.
pub fn minimal_rectangular_coefficient(space: &Space, sampling: &Sampling) -> Result<MinimalS> {
    let opts = ScanOptions {
        witness_cap: 0,
        ..ScanOptions::default()
    };
    Ok(minimal_from(scan(space, 1.0, sampling, &opts)?))
}

fn minimal_from(sc: Scan) -> MinimalS {
    if sc.checked == 0 {
        return MinimalS::Undefined;
    }
    match sc.best {
        Some(b) if b.ratio.is_infinite() => MinimalS::Infinite { witness: b },
        Some(b) => MinimalS::Finite {
            value: b.ratio,
            witness: Some(b),
        },
        None => MinimalS::Finite {
            value: 0.0,
            witness: None,
        },
    }
}

/// Reports every pair with `d(x, y) == 0`, `x != y`, and every point with
/// `d(p, p) != 0`.
pub fn check_identity_axiom(
    space: &Space,
    sampling: &Sampling,
    opts: &ScanOptions,
) -> Result<IdentityReport> {
    let c = space.carrier(sampling.grid)?;
    Ok(identity_on(&c, sampling.describe(space), opts))
}

fn identity_on(c: &Carrier, source: String, opts: &ScanOptions) -> IdentityReport {
    let n = c.len();
    let mut violations = Vec::new();
    let mut count = 0u64;
    for i in 0..n {
        for j in 0..n {
            let d = c.d(i, j);
            let kind = match (i == j, d == 0.0) {
                (true, false) => IdentityViolationKind::NonzeroDiagonal,
                (false, true) => IdentityViolationKind::ZeroOffDiagonal,
                _ => continue,
            };
            count += 1;
            if violations.len() < opts.witness_cap {
                violations.push(IdentityViolation {
                    x: c.points[i].label.clone(),
                    y: c.points[j].label.clone(),
                    d,
                    kind,
                });
            }
        }
    }
    IdentityReport {
        source,
        passed: count == 0,
        checked_pairs: (n * n) as u64,
        violation_count: count,
        violations,
    }
}

/// Runs the symmetry, triangle and quadrilateral scans and fills every flag.
/// `s` defaults to the space's claimed coefficient, else 1.
pub fn classify(
    space: &Space,
    s: Option<f64>,
    sampling: &Sampling,
    opts: &ScanOptions,
) -> Result<Classification> {
    let s = s.or(space.claimed_s()).unwrap_or(1.0);
    let c = space.carrier(sampling.grid)?;
    let n = c.len();
    let identity = identity_on(&c, sampling.describe(space), opts);

    let mut asymmetry_count = 0u64;
    let mut asymmetry_witnesses = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (f, b) = (c.d(i, j), c.d(j, i));
            if (f - b).abs() > opts.tol {
                asymmetry_count += 1;
                if asymmetry_witnesses.len() < opts.witness_cap {
                    asymmetry_witnesses.push(AsymmetryWitness {
                        x: c.points[i].label.clone(),
                        y: c.points[j].label.clone(),
                        forward: f,
                        backward: b,
                    });
                }
            }
        }
    }

    let mut triangle_witness = None;
    let mut b_triangle_witness = None;
    'outer: for x in 0..n {
        for y in 0..n {
            if y == x {
                continue;
            }
            let lhs = c.d(x, y);
            for z in 0..n {
                if z == x || z == y {
                    continue;
                }
                let rhs = c.d(x, z) + c.d(z, y);
                let w = || TriangleWitness {
                    x: c.points[x].label.clone(),
                    z: c.points[z].label.clone(),
                    y: c.points[y].label.clone(),
                    lhs,
                    rhs_sum: rhs,
                };
                if triangle_witness.is_none() && lhs > rhs + opts.tol {
                    triangle_witness = Some(w());
                }
                if b_triangle_witness.is_none() && lhs > s * rhs + opts.tol {
                    b_triangle_witness = Some(w());
                }
                if b_triangle_witness.is_some() {
                    break 'outer;
                }
            }
        }
    }

    let first_only = ScanOptions {
        witness_cap: 1,
        ..*opts
    };
    let at_one = scan(space, 1.0, sampling, &first_only)?;
    let rectangular_witness = at_one.violations.first().cloned();
    let rect_ok = at_one.violation_count == 0;
    let (rqb_ok, rqb_witness) = if s == 1.0 {
        (rect_ok, rectangular_witness.clone())
    } else {
        let at_s = scan(space, s, sampling, &first_only)?;
        (at_s.violation_count == 0, at_s.violations.first().cloned())
    };
    let minimal_s = minimal_from(at_one);

    let is_quasi_identity = identity.passed;
    let is_symmetric = asymmetry_count == 0;
    let satisfies_triangle = triangle_witness.is_none();
    Ok(Classification {
        s,
        tol: opts.tol,
        source: sampling.describe(space),
        is_quasi_identity,
        is_symmetric,
        satisfies_triangle,
        is_metric: is_quasi_identity && is_symmetric && satisfies_triangle,
        is_b_metric: is_quasi_identity && is_symmetric && b_triangle_witness.is_none(),
        is_rectangular: is_quasi_identity && is_symmetric && rect_ok,
        is_rqb: is_quasi_identity && rqb_ok,
        minimal_s,
        identity_violations: identity.violations,
        asymmetry_count,
        asymmetry_witnesses,
        triangle_witness,
        b_triangle_witness,
        rectangular_witness,
        rqb_witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{AnalyticSpace, FiniteSpace, Interval, OverrideEntry, Point};

    fn euclid(values: &[f64]) -> Space {
        FiniteSpace::new(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| Point::new(format!("p{i}"), *v))
                .collect(),
            Some("abs(x - y)"),
            vec![],
            None,
            None,
        )
        .unwrap()
        .into()
    }

    fn zeros(n: usize) -> Space {
        FiniteSpace::new(
            (0..n).map(|i| Point::new(format!("p{i}"), i as f64)).collect(),
            Some("0"),
            vec![],
            None,
            None,
        )
        .unwrap()
        .into()
    }

    #[test]
    fn fewer_than_four_points_is_vacuous() {
        let r = check_b_rectangular(&euclid(&[0.0, 1.0, 2.0]), 1.0, &Sampling::default(), &ScanOptions::default())
            .unwrap();
        assert_eq!(r.outcome, Outcome::VacuousPass);
        assert_eq!(r.checked, 0);
        assert_eq!(
            minimal_rectangular_coefficient(&euclid(&[0.0, 1.0]), &Sampling::default()).unwrap(),
            MinimalS::Undefined
        );
    }

    #[test]
    fn collinear_euclidean_is_rectangular() {
        let space = euclid(&[0.0, 0.5, 1.25, 3.0, 4.0]);
        let m = minimal_rectangular_coefficient(&space, &Sampling::default()).unwrap();
        assert!(m.value().unwrap() <= 1.0 + 1e-12);
        let c = classify(&space, None, &Sampling::default(), &ScanOptions::default()).unwrap();
        assert!(c.is_metric && c.is_b_metric && c.is_rectangular && c.is_rqb);
    }

    #[test]
    fn degenerate_zero_table() {
        let r = check_identity_axiom(&zeros(3), &Sampling::default(), &ScanOptions::default()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.violation_count, 6);
        assert!(r
            .violations
            .iter()
            .all(|v| v.kind == IdentityViolationKind::ZeroOffDiagonal && v.x != v.y));
    }

    #[test]
    fn zero_denominator_is_infinite() {
        // d(a, d) > 0 but every three-hop path through b, c costs 0.
        let pts = ["a", "b", "c", "d"]
            .iter()
            .enumerate()
            .map(|(i, l)| Point::new(*l, i as f64))
            .collect();
        let space: Space = FiniteSpace::new(
            pts,
            Some("0"),
            vec![OverrideEntry::new("a", "d", 1.0)],
            None,
            None,
        )
        .unwrap()
        .into();
        match minimal_rectangular_coefficient(&space, &Sampling::default()).unwrap() {
            MinimalS::Infinite { witness } => {
                assert_eq!((witness.x.as_str(), witness.y.as_str()), ("a", "d"));
                assert!(witness.ratio.is_infinite());
            }
            other => panic!("{other:?}"),
        }
        let r = check_b_rectangular(&space, 1e6, &Sampling::default(), &ScanOptions::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Fail);
    }

    #[test]
    fn analytic_identity_on_grid() {
        let space: Space = AnalyticSpace::new(Interval::new(1.0, 2.0).unwrap(), "(x - y)^2", None)
            .unwrap()
            .into();
        let sampling = Sampling {
            grid: 50,
            ..Sampling::default()
        };
        let r = check_identity_axiom(&space, &sampling, &ScanOptions::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked_pairs, 2500);

        let bad: Space = AnalyticSpace::new(Interval::new(1.0, 2.0).unwrap(), "(x - y)^2 + 1", None)
            .unwrap()
            .into();
        let r = check_identity_axiom(&bad, &sampling, &ScanOptions::default()).unwrap();
        assert_eq!(r.violation_count, 50);
        assert!(r
            .violations
            .iter()
            .all(|v| v.kind == IdentityViolationKind::NonzeroDiagonal));
    }

    #[test]
    fn witness_cap_keeps_exact_counts() {
        let space = zeros(5);
        let opts = ScanOptions {
            witness_cap: 2,
            ..ScanOptions::default()
        };
        let r = check_identity_axiom(&space, &Sampling::default(), &opts).unwrap();
        assert_eq!(r.violation_count, 20);
        assert_eq!(r.violations.len(), 2);
    }
}
