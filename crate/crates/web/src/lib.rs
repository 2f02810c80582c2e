//! Browser bindings for the demo page in `www/`.
//!
//! Each export takes plain strings and numbers and returns a JSON string.
//! The `*_json` functions hold the logic and run natively in tests.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use rqbm::contraction::{self, Condition, PairStatus, SelfMap};
use rqbm::instances::{self, DEFAULT_GRID_B};
use rqbm::solver::{self, PicardOptions};
use rqbm::space::{self, Sampling, ScanOptions, Space, DEFAULT_TOL};
use rqbm::thetaphi::{PhiSpec, ThetaSpec};

/// An instance name, or a space file given inline as JSON.
fn load(source: &str) -> Result<(Space, Option<instances::InstanceBundle>), String> {
    let source = source.trim();
    if source.starts_with('{') {
        Ok((Space::from_json(source).map_err(|e| e.to_string())?, None))
    } else {
        let b = instances::by_name(source, DEFAULT_GRID_B).map_err(|e| e.to_string())?;
        Ok((b.space.clone(), Some(b)))
    }
}

fn map_for(src: &str, bundle: Option<&instances::InstanceBundle>) -> Result<SelfMap, String> {
    if !src.trim().is_empty() {
        return SelfMap::parse(src).map_err(|e| e.to_string());
    }
    bundle
        .and_then(|b| b.map.clone())
        .ok_or_else(|| "enter a map T(x)".to_string())
}

pub fn picard_json(source: &str, map: &str, start: &str, max_iter: u32, tol: f64) -> Result<String, String> {
    let (space, bundle) = load(source)?;
    let map = map_for(map, bundle.as_ref())?;
    let x0 = space.point(start.trim()).map_err(|e| e.to_string())?;
    let opts = PicardOptions {
        max_iter: max_iter as usize,
        tol,
    };
    let trace = solver::picard_iterate(&space, &map, &x0, &opts).map_err(|e| e.to_string())?;
    let diag = solver::cauchy_diagnostics(&trace, 10.0 * tol).map_err(|e| e.to_string())?;
    Ok(json!({
        "values": trace.iterates.iter().map(|p| p.value).collect::<Vec<_>>(),
        "labels": trace.iterates.iter().map(|p| p.label.clone()).collect::<Vec<_>>(),
        "fwd_step": trace.fwd_step,
        "bwd_step": trace.bwd_step,
        "terminated_by": trace.terminated_by,
        "limit": trace.limit.map(|p| p.value),
        "cauchy": diag.passed,
    })
    .to_string())
}

pub fn coefficient_json(source: &str, s: f64, grid: u32, random: u32, seed: u64) -> Result<String, String> {
    let (space, _) = load(source)?;
    let sampling = Sampling {
        grid: grid as usize,
        random: random as usize,
        seed,
    };
    let opts = ScanOptions {
        witness_cap: 1,
        ..ScanOptions::default()
    };
    let report = space::check_b_rectangular(&space, s, &sampling, &opts).map_err(|e| e.to_string())?;
    let minimal = space::minimal_rectangular_coefficient(&space, &sampling).map_err(|e| e.to_string())?;
    let witness = match &minimal {
        space::MinimalS::Finite { witness, .. } => witness.clone(),
        space::MinimalS::Infinite { witness } => Some(witness.clone()),
        space::MinimalS::Undefined => None,
    };
    Ok(json!({
        "s": s,
        "passed": report.outcome.passed(),
        "checked": report.checked,
        "violations": report.violation_count,
        "first_violation": report.violations.first(),
        "minimal_s": minimal.value().map(|v| if v.is_finite() { json!(v) } else { json!("inf") }),
        "extremal": witness,
        "sampling": sampling.describe(&space),
    })
    .to_string())
}

/// Per-pair slack of the chosen condition, laid out on the carrier as a
/// row-major matrix (`null` where the pair is skipped).
pub fn slack_json(source: &str, map: &str, kind: &str, theta: &str, phi: &str, param: f64, s: f64, grid: u32) -> Result<String, String> {
    let (space, bundle) = load(source)?;
    let map = map_for(map, bundle.as_ref())?;
    let theta = || ThetaSpec::parse(theta.trim()).map_err(|e| e.to_string());
    let cond = match kind {
        "theta-r" => Condition::ThetaPower { theta: theta()?, r: param },
        "theta-phi" => Condition::ThetaPhi {
            theta: theta()?,
            phi: PhiSpec::parse(phi.trim()).map_err(|e| e.to_string())?,
        },
        "linear" => Condition::Linear { k: param },
        other => return Err(format!("unknown condition `{other}`")),
    };
    let sampling = Sampling {
        grid: grid as usize,
        random: 0,
        seed: 0,
    };
    let carrier = space.carrier(grid as usize).map_err(|e| e.to_string())?;
    let records = contraction::evaluate_pairs(&space, &map, &cond, s, &sampling, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let n = carrier.len();
    let slack: Vec<Value> = records
        .iter()
        .take(n * n)
        .map(|r| r.slack.map_or(Value::Null, |v| json!(v)))
        .collect();
    let failing = records.iter().filter(|r| r.status == PairStatus::Fail).count();
    let domain = records.iter().filter(|r| r.status == PairStatus::DomainViolation).count();
    Ok(json!({
        "labels": carrier.points.iter().map(|p| p.label.clone()).collect::<Vec<_>>(),
        "n": n,
        "slack": slack,
        "failing": failing,
        "domain_violations": domain,
        "pairs": records.len(),
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn picard(source: &str, map: &str, start: &str, max_iter: u32, tol: f64) -> Result<String, JsError> {
    js(picard_json(source, map, start, max_iter, tol))
}

#[wasm_bindgen]
pub fn coefficient(source: &str, s: f64, grid: u32, random: u32, seed: u64) -> Result<String, JsError> {
    js(coefficient_json(source, s, grid, random, seed))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn slack(source: &str, map: &str, kind: &str, theta: &str, phi: &str, param: f64, s: f64, grid: u32) -> Result<String, JsError> {
    js(slack_json(source, map, kind, theta, phi, param, s, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn picard_on_fourth_root() {
        let v = parse(&picard_json("example-fourth-root", "", "2", 100, 1e-10).unwrap());
        assert!((v["limit"].as_f64().unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(v["values"][0], 2.0);
        assert_eq!(v["cauchy"], true);
        assert!(picard_json("example-2-3", "", "1/2", 10, 1e-10).is_err());
    }

    #[test]
    fn coefficient_scan() {
        let v = parse(&coefficient_json("example-2-3", 3.0, 40, 0, 0).unwrap());
        assert_eq!(v["passed"], true);
        assert_eq!(v["minimal_s"], 3.0000000000000004);
        let v = parse(&coefficient_json("example-sqrt", 2.0, 12, 100, 1).unwrap());
        assert_eq!(v["passed"], false);
        assert!(v["first_violation"].is_object());
    }

    #[test]
    fn slack_matrix_shape() {
        let v = parse(&slack_json("example-fourth-root", "", "theta-r", "builtin:exp-sqrt", "", 0.5, 2.0, 10).unwrap());
        assert_eq!(v["n"], 10);
        assert_eq!(v["slack"].as_array().unwrap().len(), 100);
        assert_eq!(v["failing"], 0);
        // the diagonal is skipped
        assert!(v["slack"][0].is_null());
        let inline = r#"{"kind": "analytic", "domain": {"lo": 0, "hi": 1}, "forward": "abs(x - y)"}"#;
        let v = parse(&slack_json(inline, "x / 2", "linear", "", "", 0.5, 1.0, 5).unwrap());
        assert_eq!(v["failing"], 0);
        assert!(slack_json(inline, "x / 2", "bogus", "", "", 0.5, 1.0, 5).is_err());
    }
}
