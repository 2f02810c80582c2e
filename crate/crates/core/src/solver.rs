//! Picard iteration `x_{n+1} = T(x_n)` with forward/backward diagnostics.
//!
//! In a quasi-metric the two argument orders measure different things, so a
//! trace records four series: `η(xₙ, xₙ₊₁)`, `η(xₙ₊₁, xₙ)`, `η(xₙ, xₙ₊₂)` and
//! `η(xₙ₊₂, xₙ)`. The solver never assumes the map is contractive; the
//! diagnostics report which of the expected properties hold.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::SelfMap;
use crate::error::{Error, Result};
use crate::space::{Point, Space};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            max_iter: 10_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ExactFixedPoint,
    Tolerance,
    MaxIter,
    CycleDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub start: Point,
    pub iterates: Vec<Point>,
    pub fwd_step: Vec<f64>,
    pub bwd_step: Vec<f64>,
    pub fwd_skip: Vec<f64>,
    pub bwd_skip: Vec<f64>,
    pub terminated_by: Termination,
    pub limit: Option<Point>,
    pub tol: f64,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn converged(&self) -> bool {
        self.limit.is_some()
    }
}

/// Iterates from `x0` until a step distance is exactly 0, both step
/// distances and the value displacement fall below `tol`, `max_iter` steps
/// are taken, or (finite spaces) a point recurs after two or more steps.
pub fn picard_iterate(
    space: &Space,
    map: &SelfMap,
    x0: &Point,
    opts: &PicardOptions,
) -> Result<PicardTrace> {
    if opts.max_iter < 1 || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "picard iteration needs max_iter >= 1 and tol > 0".into(),
        ));
    }
    map.validate(space)?;
    // membership of the start point
    space.distance(x0, x0)?;
    let track_cycles = matches!(space, Space::Finite(_));
    let mut seen: HashMap<String, usize> = HashMap::new();
    seen.insert(x0.label.clone(), 0);

    let mut iterates = vec![x0.clone()];
    let (mut fwd_step, mut bwd_step, mut fwd_skip, mut bwd_skip) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut terminated_by = Termination::MaxIter;
    for n in 0..opts.max_iter {
        let cur = &iterates[n];
        let next = map.apply(space, cur)?;
        let f = space.distance(cur, &next)?;
        let b = space.distance(&next, cur)?;
        fwd_step.push(f);
        bwd_step.push(b);
        if n >= 1 {
            let prev = &iterates[n - 1];
            fwd_skip.push(space.distance(prev, &next)?);
            bwd_skip.push(space.distance(&next, prev)?);
        }
        let displacement = (next.value - cur.value).abs();
        iterates.push(next);
        if f == 0.0 {
            terminated_by = Termination::ExactFixedPoint;
            break;
        }
        if f.max(b) < opts.tol && displacement < opts.tol {
            terminated_by = Termination::Tolerance;
            break;
        }
        if track_cycles {
            let label = iterates[n + 1].label.clone();
            if let Some(&j) = seen.get(&label) {
                if n + 1 - j >= 2 {
                    terminated_by = Termination::CycleDetected;
                    break;
                }
            }
            seen.insert(label, n + 1);
        }
    }
    let limit = match terminated_by {
        Termination::ExactFixedPoint | Termination::Tolerance => iterates.last().cloned(),
        _ => None,
    };
    Ok(PicardTrace {
        start: x0.clone(),
        iterates,
        fwd_step,
        bwd_step,
        fwd_skip,
        bwd_skip,
        terminated_by,
        limit,
        tol: opts.tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostic {
    pub series: String,
    pub len: usize,
    pub strictly_decreasing: bool,
    /// First index `i` with `s[i] >= s[i-1]` (all-zero stretches excepted).
    pub first_violation: Option<usize>,
    pub tail: Option<f64>,
    pub tail_below_tol: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub tol: f64,
    pub passed: bool,
    pub series: Vec<SeriesDiagnostic>,
}

fn diagnose(name: &str, s: &[f64], tol: f64) -> SeriesDiagnostic {
    let first_violation = (1..s.len()).find(|&i| !(s[i] < s[i - 1] || (s[i] == 0.0 && s[i - 1] == 0.0)));
    let tail = s.last().copied();
    SeriesDiagnostic {
        series: name.to_string(),
        len: s.len(),
        strictly_decreasing: first_violation.is_none(),
        first_violation,
        tail,
        tail_below_tol: tail.is_none_or(|t| t < tol),
    }
}

/// Checks that every distance series decreases strictly and ends below `tol`.
pub fn cauchy_diagnostics(trace: &PicardTrace, tol: f64) -> Result<CauchyReport> {
    if trace.iterates.len() < 2 {
        return Err(Error::Precondition("trace has no steps".into()));
    }
    let series = vec![
        diagnose("fwd_step", &trace.fwd_step, tol),
        diagnose("bwd_step", &trace.bwd_step, tol),
        diagnose("fwd_skip", &trace.fwd_skip, tol),
        diagnose("bwd_skip", &trace.bwd_skip, tol),
    ];
    Ok(CauchyReport {
        tol,
        passed: series.iter().all(|s| s.strictly_decreasing && s.tail_below_tol),
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointVerdict {
    pub point: Point,
    pub image: Point,
    /// η(Tz, z)
    pub fwd_residual: f64,
    /// η(z, Tz)
    pub bwd_residual: f64,
    pub verified: bool,
    pub tol: f64,
}

/// Both residuals must be within `tol`.
pub fn verify_fixed_point(space: &Space, map: &SelfMap, z: &Point, tol: f64) -> Result<FixedPointVerdict> {
    let image = map.apply(space, z)?;
    let fwd_residual = space.distance(&image, z)?;
    let bwd_residual = space.distance(z, &image)?;
    Ok(FixedPointVerdict {
        point: z.clone(),
        image,
        fwd_residual,
        bwd_residual,
        verified: fwd_residual <= tol && bwd_residual <= tol,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub start: String,
    pub terminated_by: Termination,
    pub iterations: usize,
    pub limit: Option<Point>,
    /// Index into `representatives` for converged runs.
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub merge_tol: f64,
    pub passed: bool,
    pub representatives: Vec<Point>,
    pub non_converged: Vec<String>,
    pub runs: Vec<RunSummary>,
}

/// Runs Picard from every start and groups the limits: two limits merge when
/// both directed distances between them are within `merge_tol`. Passes iff
/// at least one run converged and all converged runs share one limit.
pub fn uniqueness_scan(
    space: &Space,
    map: &SelfMap,
    starts: &[Point],
    opts: &PicardOptions,
    merge_tol: f64,
) -> Result<UniquenessReport> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("uniqueness scan needs at least one start".into()));
    }
    let traces: Vec<PicardTrace> = starts
        .par_iter()
        .map(|x0| picard_iterate(space, map, x0, opts))
        .collect::<Result<_>>()?;
    let mut representatives: Vec<Point> = Vec::new();
    let mut runs = Vec::with_capacity(traces.len());
    let mut non_converged = Vec::new();
    for t in traces {
        let mut cluster = None;
        if let Some(limit) = &t.limit {
            for (i, rep) in representatives.iter().enumerate() {
                if space.distance(limit, rep)? <= merge_tol && space.distance(rep, limit)? <= merge_tol {
                    cluster = Some(i);
                    break;
                }
            }
            if cluster.is_none() {
                representatives.push(limit.clone());
                cluster = Some(representatives.len() - 1);
            }
        } else {
            non_converged.push(t.start.label.clone());
        }
        runs.push(RunSummary {
            start: t.start.label.clone(),
            terminated_by: t.terminated_by,
            iterations: t.iterations(),
            limit: t.limit,
            cluster,
        });
    }
    Ok(UniquenessReport {
        merge_tol,
        passed: representatives.len() == 1,
        representatives,
        non_converged,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichSide {
    pub min: f64,
    pub max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub limit: Point,
    pub y: Point,
    pub s: f64,
    pub tail_len: usize,
    /// Bounds on η(xₙ, y) from η(x, y).
    pub forward: SandwichSide,
    /// Bounds on η(y, xₙ) from η(y, x).
    pub backward: SandwichSide,
    pub passed: bool,
}

/// Over the last `tail_len` iterates, checks
/// `η(x, y)/s ≤ min η(xₙ, y)` and `max η(xₙ, y) ≤ s·η(x, y)`, and the same
/// with arguments swapped.
pub fn limit_sandwich_check(
    space: &Space,
    trace: &PicardTrace,
    y: &Point,
    s: f64,
    tail_len: usize,
    tol: f64,
) -> Result<SandwichReport> {
    let limit = trace
        .limit
        .clone()
        .ok_or_else(|| Error::Precondition("trace did not converge".into()))?;
    if limit.label == y.label || space.distance(&limit, y)? == 0.0 {
        return Err(Error::Precondition("comparison point must differ from the limit".into()));
    }
    if tail_len == 0 || tail_len > trace.iterates.len() {
        return Err(Error::InvalidArgument(format!(
            "tail_len {tail_len} must lie in 1..={}",
            trace.iterates.len()
        )));
    }
    let tail = &trace.iterates[trace.iterates.len() - tail_len..];
    let side = |anchor: f64, values: Vec<f64>| {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lower_bound = anchor / s;
        let upper_bound = s * anchor;
        SandwichSide {
            min,
            max,
            lower_bound,
            upper_bound,
            holds: lower_bound <= min + tol && max <= upper_bound + tol,
        }
    };
    let fwd_vals = tail.iter().map(|x| space.distance(x, y)).collect::<Result<Vec<_>>>()?;
    let bwd_vals = tail.iter().map(|x| space.distance(y, x)).collect::<Result<Vec<_>>>()?;
    let forward = side(space.distance(&limit, y)?, fwd_vals);
    let backward = side(space.distance(y, &limit)?, bwd_vals);
    Ok(SandwichReport {
        passed: forward.holds && backward.holds,
        limit,
        y: y.clone(),
        s,
        tail_len,
        forward,
        backward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{AnalyticSpace, FiniteSpace, Interval, OverrideEntry};

    fn piecewise() -> Space {
        AnalyticSpace::new(
            Interval::new(1.0, 2.0).unwrap(),
            "if(x >= y, (x-y)^2, 0.5*(y-x)^2)",
            Some(2.0),
        )
        .unwrap()
        .into()
    }

    fn two_point() -> Space {
        FiniteSpace::new(
            vec![Point::new("a", 0.0), Point::new("b", 1.0)],
            Some("abs(x - y)"),
            vec![OverrideEntry::new("a", "b", 1.0)],
            None,
            None,
        )
        .unwrap()
        .into()
    }

    #[test]
    fn sqrt_converges_to_one() {
        let space = piecewise();
        let map = SelfMap::parse("sqrt(x)").unwrap();
        let x0 = space.point("2").unwrap();
        let t = picard_iterate(&space, &map, &x0, &PicardOptions::default()).unwrap();
        assert_eq!(t.terminated_by, Termination::Tolerance);
        let z = t.limit.as_ref().unwrap().value;
        assert!((z - 1.0).abs() < 1e-8, "{z}");
        assert!(t.iterations() <= 60);
        // iterates follow the recurrence exactly
        for w in t.iterates.windows(2) {
            assert_eq!(w[1].value, w[0].value.sqrt());
        }
        let d = cauchy_diagnostics(&t, 1e-9).unwrap();
        assert!(d.passed, "{d:#?}");
    }

    #[test]
    fn fixed_start_stops_immediately() {
        let space = piecewise();
        let map = SelfMap::parse("sqrt(x)").unwrap();
        let t = picard_iterate(&space, &map, &space.point("1").unwrap(), &PicardOptions::default()).unwrap();
        assert_eq!(t.terminated_by, Termination::ExactFixedPoint);
        assert_eq!(t.iterations(), 1);
        assert_eq!(t.fwd_step, vec![0.0]);
    }

    #[test]
    fn swap_cycles() {
        let space = two_point();
        let map = SelfMap::table([("a", "b"), ("b", "a")]);
        let t = picard_iterate(&space, &map, &space.point("a").unwrap(), &PicardOptions::default()).unwrap();
        assert_eq!(t.terminated_by, Termination::CycleDetected);
        assert!(t.limit.is_none());
        let d = cauchy_diagnostics(&t, 1e-9).unwrap();
        assert!(!d.passed);
        assert_eq!(d.series[0].first_violation, Some(1));
    }

    #[test]
    fn constant_map_has_zero_tail() {
        let space = two_point();
        let map = SelfMap::table([("a", "b"), ("b", "b")]);
        let t = picard_iterate(&space, &map, &space.point("b").unwrap(), &PicardOptions::default()).unwrap();
        let d = cauchy_diagnostics(&t, 1e-9).unwrap();
        assert!(d.passed);
        let t = picard_iterate(&space, &map, &space.point("a").unwrap(), &PicardOptions::default()).unwrap();
        assert_eq!(t.terminated_by, Termination::ExactFixedPoint);
        assert_eq!(t.limit.unwrap().label, "b");
    }

    #[test]
    fn max_iter_is_respected() {
        let space = piecewise();
        let map = SelfMap::parse("sqrt(x)").unwrap();
        let opts = PicardOptions { max_iter: 3, tol: 1e-10 };
        let t = picard_iterate(&space, &map, &space.point("2").unwrap(), &opts).unwrap();
        assert_eq!(t.terminated_by, Termination::MaxIter);
        assert_eq!(t.iterations(), 3);
        assert!(limit_sandwich_check(&space, &t, &space.point("2").unwrap(), 2.0, 2, 1e-9).is_err());
    }

    #[test]
    fn residuals() {
        let space = piecewise();
        let map = SelfMap::parse("sqrt(x)").unwrap();
        let v = verify_fixed_point(&space, &map, &space.point("1").unwrap(), 1e-12).unwrap();
        assert!(v.verified);
        let v = verify_fixed_point(&space, &map, &space.point("2").unwrap(), 1e-12).unwrap();
        assert!(!v.verified);
        let r2 = 2f64.sqrt();
        // η(√2, 2): √2 < 2 so the half branch; η(2, √2): full branch
        assert_eq!(v.fwd_residual, 0.5 * (2.0 - r2) * (2.0 - r2));
        assert_eq!(v.bwd_residual, (2.0 - r2) * (2.0 - r2));
    }

    #[test]
    fn identity_map_is_not_unique() {
        let space = two_point();
        let map = SelfMap::table([("a", "a"), ("b", "b")]);
        let starts = vec![space.point("a").unwrap(), space.point("b").unwrap()];
        let r = uniqueness_scan(&space, &map, &starts, &PicardOptions::default(), 1e-8).unwrap();
        assert!(!r.passed);
        assert_eq!(r.representatives.len(), 2);
        assert!(uniqueness_scan(&space, &map, &[], &PicardOptions::default(), 1e-8).is_err());
    }

    #[test]
    fn sandwich_on_sqrt_trace() {
        let space = piecewise();
        let map = SelfMap::parse("sqrt(x)").unwrap();
        let t = picard_iterate(&space, &map, &space.point("2").unwrap(), &PicardOptions::default()).unwrap();
        let y = space.point("2").unwrap();
        let r = limit_sandwich_check(&space, &t, &y, 2.0, 10, 1e-9).unwrap();
        assert!(r.passed, "{r:#?}");
        let lim = t.limit.clone().unwrap();
        assert!(matches!(
            limit_sandwich_check(&space, &t, &lim, 2.0, 10, 1e-9),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn symmetric_sandwich_is_tight() {
        let space: Space = AnalyticSpace::new(Interval::new(0.0, 2.0).unwrap(), "abs(x - y)", None)
            .unwrap()
            .into();
        let map = SelfMap::parse("x / 2").unwrap();
        let t = picard_iterate(&space, &map, &space.point("2").unwrap(), &PicardOptions::default()).unwrap();
        let y = space.point("1").unwrap();
        let r = limit_sandwich_check(&space, &t, &y, 1.0, 5, 1e-9).unwrap();
        assert!(r.passed);
        assert!((r.forward.min - 1.0).abs() < 1e-9 && (r.forward.max - 1.0).abs() < 1e-9);
    }
}
