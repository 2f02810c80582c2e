//! Contraction certificates for a self-map `T` over a pair set.
//!
//! Every condition is an implication with antecedent `η(Tx, Ty) > 0`:
//!
//! * θ with exponent r:  `θ(s²·η(Tx, Ty)) ≤ θ(η(x, y))^r`
//! * θ-φ:                `θ(s²·η(Tx, Ty)) ≤ φ(θ(η(x, y)))`
//! * linear:             `s²·η(Tx, Ty) ≤ k·η(x, y)`
//!
//! Pairs failing the antecedent are counted as skipped, never as passes. A
//! pair with `η(x, y) = 0 < η(Tx, Ty)` puts `θ(0)` on the right side, outside
//! θ's domain, and is reported as a domain violation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Formula;
use crate::report::{ext_float, ext_float_opt};
use crate::space::{Outcome, Point, Sampling, Space, DEFAULT_TOL};
use crate::thetaphi::{PhiSpec, ThetaSpec};

/// A map from the space into itself: a label table for finite spaces or an
/// expression in `x` acting on point values.
#[derive(Debug, Clone)]
pub enum SelfMap {
    Table(BTreeMap<String, String>),
    Formula(Formula),
}

impl SelfMap {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(SelfMap::Formula(
            Formula::parse(src, &["x"]).map_err(|e| Error::parse(src, e))?,
        ))
    }

    pub fn table<I, A, B>(entries: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        SelfMap::Table(
            entries
                .into_iter()
                .map(|(a, b)| (a.into(), b.into()))
                .collect(),
        )
    }

    pub fn describe(&self) -> String {
        match self {
            SelfMap::Formula(f) => f.source().to_string(),
            SelfMap::Table(t) => {
                let parts: Vec<String> = t.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                format!("table[{}]", parts.join(", "))
            }
        }
    }

    /// Table maps must be total over a finite space and hit registered labels.
    pub fn validate(&self, space: &Space) -> Result<()> {
        if let SelfMap::Table(t) = self {
            let fs = space.as_finite().ok_or_else(|| {
                Error::InvalidArgument("label tables only apply to finite spaces".into())
            })?;
            for p in fs.points() {
                let img = t.get(&p.label).ok_or_else(|| {
                    Error::InvalidArgument(format!("map has no image for `{}`", p.label))
                })?;
                if fs.index_of(img).is_none() {
                    return Err(Error::OutsideSpace(format!("T({}) = {img}", p.label)));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, space: &Space, p: &Point) -> Result<Point> {
        match self {
            SelfMap::Formula(f) => {
                let v = f.eval(&[p.value])?;
                space
                    .point_at(v)
                    .map_err(|_| Error::OutsideSpace(format!("T({}) = {v}", p.label)))
            }
            SelfMap::Table(t) => {
                let img = t
                    .get(&p.label)
                    .ok_or_else(|| Error::UnknownLabel(p.label.clone()))?;
                space.point(img)
            }
        }
    }
}

/// All ordered pairs of a finite space (diagonal included), or the grid pairs
/// plus seeded random pairs of an analytic one.
pub fn pair_set(space: &Space, sampling: &Sampling) -> Result<Vec<(Point, Point)>> {
    let carrier = space.carrier(sampling.grid)?;
    let mut pairs = Vec::with_capacity(carrier.len() * carrier.len() + sampling.random);
    for a in &carrier.points {
        for b in &carrier.points {
            pairs.push((a.clone(), b.clone()));
        }
    }
    if let Space::Analytic(_) = space {
        // distinct stream from the quadruple sampler
        let pts = space.random_points(2 * sampling.random, sampling.seed ^ PAIR_STREAM);
        pairs.extend(pts.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())));
    }
    Ok(pairs)
}

const PAIR_STREAM: u64 = 0x7061_6972;

#[derive(Debug, Clone)]
pub enum Condition {
    ThetaPower { theta: ThetaSpec, r: f64 },
    ThetaPhi { theta: ThetaSpec, phi: PhiSpec },
    Linear { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    ThetaR,
    ThetaPhi,
    LinearK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Skipped,
    Pass,
    Fail,
    DomainViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub x: String,
    pub y: String,
    pub tx: String,
    pub ty: String,
    pub d_xy: f64,
    pub d_img: f64,
    pub status: PairStatus,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    #[serde(with = "ext_float_opt")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub kind: ConditionKind,
    pub map: String,
    pub theta: Option<String>,
    pub phi: Option<String>,
    pub r: Option<f64>,
    pub k: Option<f64>,
    pub s: f64,
    pub tol: f64,
    pub pair_source: String,
    pub verdict: Outcome,
    pub pairs: u64,
    pub evaluated: u64,
    pub skipped: u64,
    pub failing: u64,
    pub domain_violations: u64,
    /// Smallest slack among evaluated pairs, first in pair order on ties.
    pub worst_pair: Option<PairRecord>,
    pub first_domain_violation: Option<PairRecord>,
    #[serde(with = "ext_float_opt")]
    pub max_ratio: Option<f64>,
}

impl ContractionCertificate {
    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

fn evaluate_pair(
    space: &Space,
    map: &SelfMap,
    cond: &Condition,
    s: f64,
    tol: f64,
    x: &Point,
    y: &Point,
) -> Result<PairRecord> {
    let (tx, ty) = (map.apply(space, x)?, map.apply(space, y)?);
    let d_xy = space.distance(x, y)?;
    let d_img = space.distance(&tx, &ty)?;
    let mut rec = PairRecord {
        x: x.label.clone(),
        y: y.label.clone(),
        tx: tx.label,
        ty: ty.label,
        d_xy,
        d_img,
        status: PairStatus::Skipped,
        lhs: None,
        rhs: None,
        slack: None,
        ratio: None,
    };
    if !(d_img > 0.0) {
        return Ok(rec);
    }
    let scaled = s * s * d_img;
    let (lhs, rhs, ratio) = match cond {
        Condition::Linear { k } => {
            let rhs = k * d_xy;
            let ratio = if d_xy > 0.0 { scaled / d_xy } else { f64::INFINITY };
            (scaled, rhs, ratio)
        }
        Condition::ThetaPower { theta, r } => {
            let lhs = theta.eval(scaled)?;
            if !(d_xy > 0.0) {
                rec.status = PairStatus::DomainViolation;
                rec.lhs = Some(lhs);
                rec.ratio = Some(f64::INFINITY);
                return Ok(rec);
            }
            let base = theta.eval(d_xy)?;
            let rhs = base.powf(*r);
            (lhs, rhs, log_ratio(lhs, base))
        }
        Condition::ThetaPhi { theta, phi } => {
            let lhs = theta.eval(scaled)?;
            if !(d_xy > 0.0) {
                rec.status = PairStatus::DomainViolation;
                rec.lhs = Some(lhs);
                rec.ratio = Some(f64::INFINITY);
                return Ok(rec);
            }
            let rhs = phi.eval(theta.eval(d_xy)?)?;
            (lhs, rhs, lhs / rhs)
        }
    };
    let slack = rhs - lhs;
    rec.status = if slack >= -tol {
        PairStatus::Pass
    } else {
        PairStatus::Fail
    };
    rec.lhs = Some(lhs);
    rec.rhs = Some(rhs);
    rec.slack = Some(slack);
    rec.ratio = Some(ratio);
    Ok(rec)
}

/// `ln θ(s²η(Tx,Ty)) / ln θ(η(x,y))`: the exponent this pair needs.
fn log_ratio(lhs: f64, base: f64) -> f64 {
    let den = base.ln();
    if den > 0.0 {
        lhs.ln() / den
    } else {
        f64::INFINITY
    }
}

/// Evaluates the condition on every pair, in pair order.
pub fn evaluate_pairs(
    space: &Space,
    map: &SelfMap,
    cond: &Condition,
    s: f64,
    sampling: &Sampling,
    tol: f64,
) -> Result<Vec<PairRecord>> {
    check_params(cond, s)?;
    map.validate(space)?;
    let pairs = pair_set(space, sampling)?;
    pairs
        .par_iter()
        .map(|(x, y)| evaluate_pair(space, map, cond, s, tol, x, y))
        .collect()
}

fn check_params(cond: &Condition, s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 1.0) {
        return Err(Error::InvalidArgument(format!("s = {s} must be >= 1")));
    }
    let (name, v) = match cond {
        Condition::ThetaPower { r, .. } => ("r", *r),
        Condition::Linear { k } => ("k", *k),
        Condition::ThetaPhi { .. } => return Ok(()),
    };
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

/// Full check: per-pair evaluation folded into a certificate.
pub fn certify(
    space: &Space,
    map: &SelfMap,
    cond: &Condition,
    s: f64,
    sampling: &Sampling,
    tol: f64,
) -> Result<ContractionCertificate> {
    let records = evaluate_pairs(space, map, cond, s, sampling, tol)?;
    Ok(fold_certificate(space, map, cond, s, sampling, tol, &records))
}

fn fold_certificate(
    space: &Space,
    map: &SelfMap,
    cond: &Condition,
    s: f64,
    sampling: &Sampling,
    tol: f64,
    records: &[PairRecord],
) -> ContractionCertificate {
    let mut evaluated = 0;
    let mut skipped = 0;
    let mut failing = 0;
    let mut domain = 0;
    let mut worst: Option<&PairRecord> = None;
    let mut first_domain = None;
    let mut max_ratio: Option<f64> = None;
    for rec in records {
        match rec.status {
            PairStatus::Skipped => skipped += 1,
            PairStatus::DomainViolation => {
                domain += 1;
                first_domain.get_or_insert(rec);
            }
            PairStatus::Pass | PairStatus::Fail => {
                evaluated += 1;
                if rec.status == PairStatus::Fail {
                    failing += 1;
                }
                let slack = rec.slack.expect("evaluated pairs carry a slack");
                if worst.is_none_or(|w| slack < w.slack.unwrap()) {
                    worst = Some(rec);
                }
            }
        }
        if let Some(r) = rec.ratio {
            if max_ratio.is_none_or(|m| r > m) {
                max_ratio = Some(r);
            }
        }
    }
    let verdict = if failing > 0 || domain > 0 {
        Outcome::Fail
    } else if evaluated == 0 {
        Outcome::VacuousPass
    } else {
        Outcome::Pass
    };
    let (kind, theta, phi, r, k) = match cond {
        Condition::ThetaPower { theta, r } => {
            (ConditionKind::ThetaR, Some(theta.source().to_string()), None, Some(*r), None)
        }
        Condition::ThetaPhi { theta, phi } => (
            ConditionKind::ThetaPhi,
            Some(theta.source().to_string()),
            Some(phi.source().to_string()),
            None,
            None,
        ),
        Condition::Linear { k } => (ConditionKind::LinearK, None, None, None, Some(*k)),
    };
    ContractionCertificate {
        kind,
        map: map.describe(),
        theta,
        phi,
        r,
        k,
        s,
        tol,
        pair_source: sampling.describe(space),
        verdict,
        pairs: records.len() as u64,
        evaluated,
        skipped,
        failing,
        domain_violations: domain,
        worst_pair: worst.cloned(),
        first_domain_violation: first_domain.cloned(),
        max_ratio,
    }
}

pub fn check_theta_contraction(
    space: &Space,
    map: &SelfMap,
    theta: &ThetaSpec,
    r: f64,
    s: f64,
    sampling: &Sampling,
) -> Result<ContractionCertificate> {
    let cond = Condition::ThetaPower {
        theta: theta.clone(),
        r,
    };
    certify(space, map, &cond, s, sampling, DEFAULT_TOL)
}

pub fn check_theta_phi_contraction(
    space: &Space,
    map: &SelfMap,
    theta: &ThetaSpec,
    phi: &PhiSpec,
    s: f64,
    sampling: &Sampling,
) -> Result<ContractionCertificate> {
    let cond = Condition::ThetaPhi {
        theta: theta.clone(),
        phi: phi.clone(),
    };
    certify(space, map, &cond, s, sampling, DEFAULT_TOL)
}

pub fn check_linear_contraction(
    space: &Space,
    map: &SelfMap,
    k: f64,
    s: f64,
    sampling: &Sampling,
) -> Result<ContractionCertificate> {
    certify(space, map, &Condition::Linear { k }, s, sampling, DEFAULT_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BestExponent {
    /// Every r in `[r, 1)` satisfies the θ condition on the pair set.
    Feasible {
        r: f64,
        witness: Option<PairRecord>,
    },
    Infeasible {
        #[serde(with = "ext_float")]
        ratio: f64,
        witness: PairRecord,
    },
}

/// Tightest exponent: the supremum of `ln θ(s²η(Tx,Ty)) / ln θ(η(x,y))` over
/// pairs with positive image distance (0 when there are none).
pub fn best_exponent(
    space: &Space,
    map: &SelfMap,
    theta: &ThetaSpec,
    s: f64,
    sampling: &Sampling,
) -> Result<BestExponent> {
    // r only affects the verdict, not the ratio
    let cond = Condition::ThetaPower {
        theta: theta.clone(),
        r: 0.5,
    };
    let records = evaluate_pairs(space, map, &cond, s, sampling, DEFAULT_TOL)?;
    let mut best: Option<&PairRecord> = None;
    for rec in &records {
        if let Some(r) = rec.ratio {
            if best.is_none_or(|b| r > b.ratio.unwrap()) {
                best = Some(rec);
            }
        }
    }
    Ok(match best {
        None => BestExponent::Feasible { r: 0.0, witness: None },
        Some(b) => {
            let ratio = b.ratio.unwrap();
            if ratio < 1.0 {
                BestExponent::Feasible {
                    r: ratio.max(0.0),
                    witness: Some(b.clone()),
                }
            } else {
                BestExponent::Infeasible {
                    ratio,
                    witness: b.clone(),
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{AnalyticSpace, FiniteSpace, Interval, OverrideEntry};

    fn two_point() -> Space {
        FiniteSpace::new(
            vec![Point::new("a", 0.0), Point::new("b", 1.0)],
            None,
            vec![OverrideEntry::new("a", "b", 1.0), OverrideEntry::new("b", "a", 1.0)],
            None,
            None,
        )
        .unwrap()
        .into()
    }

    fn swap() -> SelfMap {
        SelfMap::table([("a", "b"), ("b", "a")])
    }

    #[test]
    fn swap_fails_theta_phi_with_hand_values() {
        let theta = ThetaSpec::builtin("sqrt-plus-one").unwrap();
        let phi = PhiSpec::builtin("half-plus-one").unwrap();
        let c = check_theta_phi_contraction(&two_point(), &swap(), &theta, &phi, 1.0, &Sampling::default())
            .unwrap();
        assert_eq!(c.verdict, Outcome::Fail);
        let w = c.worst_pair.unwrap();
        assert_eq!((w.x.as_str(), w.y.as_str()), ("a", "b"));
        assert_eq!(w.lhs, Some(2.0));
        assert_eq!(w.rhs, Some(1.5));
        // diagonal pairs are skipped
        assert_eq!(c.skipped, 2);
    }

    #[test]
    fn swap_fails_linear() {
        let c = check_linear_contraction(&two_point(), &swap(), 0.5, 1.0, &Sampling::default()).unwrap();
        assert_eq!(c.verdict, Outcome::Fail);
        assert_eq!(c.worst_pair.unwrap().slack, Some(-0.5));
    }

    #[test]
    fn swap_best_exponent_is_one() {
        let theta = ThetaSpec::builtin("exp-sqrt").unwrap();
        match best_exponent(&two_point(), &swap(), &theta, 1.0, &Sampling::default()).unwrap() {
            BestExponent::Infeasible { ratio, .. } => assert_eq!(ratio, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_map_is_vacuous() {
        let space = two_point();
        let map = SelfMap::table([("a", "a"), ("b", "a")]);
        let theta = ThetaSpec::builtin("exp-sqrt").unwrap();
        let c = check_theta_contraction(&space, &map, &theta, 0.5, 2.0, &Sampling::default()).unwrap();
        assert_eq!(c.verdict, Outcome::VacuousPass);
        assert_eq!(c.skipped, 4);
        assert!(c.worst_pair.is_none());
        let c = check_linear_contraction(&space, &map, 0.5, 2.0, &Sampling::default()).unwrap();
        assert_eq!(c.verdict, Outcome::VacuousPass);
        assert_eq!(
            best_exponent(&space, &map, &theta, 1.0, &Sampling::default()).unwrap(),
            BestExponent::Feasible { r: 0.0, witness: None }
        );
    }

    #[test]
    fn one_point_identity_is_vacuous() {
        let space: Space = FiniteSpace::new(vec![Point::new("p", 0.0)], None, vec![], None, None)
            .unwrap()
            .into();
        let map = SelfMap::parse("x").unwrap();
        let theta = ThetaSpec::builtin("exp-sqrt").unwrap();
        let c = check_theta_contraction(&space, &map, &theta, 0.5, 1.0, &Sampling::default()).unwrap();
        assert_eq!(c.verdict, Outcome::VacuousPass);
    }

    #[test]
    fn zero_source_distance_is_domain_violation() {
        // a and b are at distance 0 but their images are not
        let space: Space = FiniteSpace::new(
            vec![Point::new("a", 0.0), Point::new("b", 1.0), Point::new("c", 2.0)],
            Some("abs(x - y)"),
            vec![OverrideEntry::new("a", "b", 0.0)],
            None,
            None,
        )
        .unwrap()
        .into();
        let map = SelfMap::table([("a", "a"), ("b", "c"), ("c", "c")]);
        let theta = ThetaSpec::builtin("exp-sqrt").unwrap();
        let c = check_theta_contraction(&space, &map, &theta, 0.5, 1.0, &Sampling::default()).unwrap();
        assert_eq!(c.verdict, Outcome::Fail);
        let w = c.first_domain_violation.unwrap();
        assert_eq!((w.x.as_str(), w.y.as_str()), ("a", "b"));
        assert!(matches!(
            best_exponent(&space, &map, &theta, 1.0, &Sampling::default()).unwrap(),
            BestExponent::Infeasible { .. }
        ));
    }

    #[test]
    fn map_validation() {
        let space = two_point();
        assert!(SelfMap::table([("a", "b")]).validate(&space).is_err());
        assert!(SelfMap::table([("a", "b"), ("b", "zz")]).validate(&space).is_err());
        let analytic: Space = AnalyticSpace::new(Interval::new(1.0, 2.0).unwrap(), "abs(x-y)", None)
            .unwrap()
            .into();
        let out = SelfMap::parse("x + 5").unwrap();
        assert!(matches!(
            check_linear_contraction(&analytic, &out, 0.5, 1.0, &Sampling::default()),
            Err(Error::OutsideSpace(_))
        ));
        assert!(swap().validate(&analytic).is_err());
        assert!(check_linear_contraction(&space, &swap(), 1.5, 1.0, &Sampling::default()).is_err());
        assert!(check_linear_contraction(&space, &swap(), 0.5, 0.5, &Sampling::default()).is_err());
    }
}
