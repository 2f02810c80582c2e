//! Comparison functions θ: (0, ∞) → (1, ∞) and φ: [1, ∞) → [1, ∞), and
//! sampled checks of the properties that define their families.
//!
//! None of these checks is a proof. Monotonicity and the limit conditions are
//! tested on finite grids and prefixes; continuity is replaced by a jump
//! heuristic (no secant slope above 10× the median of its grid neighbors).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Formula;
use crate::report::ext_float;

const WITNESS_CAP: usize = 10;

pub const THETA_BUILTINS: &[(&str, &str)] = &[
    ("exp-sqrt", "exp(sqrt(t))"),
    ("sqrt-plus-one", "sqrt(t) + 1"),
    ("exp", "exp(t)"),
];

pub const PHI_BUILTINS: &[(&str, &str)] = &[("half-plus-one", "(t + 1) / 2"), ("power:<r>", "t^r")];

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSpec {
    name: String,
    formula: Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSpec {
    name: String,
    formula: Formula,
}

fn formula(src: &str) -> Result<Formula> {
    Formula::parse(src, &["t"]).map_err(|e| Error::parse(src, e))
}

impl ThetaSpec {
    pub fn from_expr(name: &str, src: &str) -> Result<Self> {
        Ok(ThetaSpec {
            name: name.to_string(),
            formula: formula(src)?,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, src) = THETA_BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown theta builtin `{name}`")))?;
        Self::from_expr(name, src)
    }

    /// `builtin:<name>` or an expression in `t`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.strip_prefix("builtin:") {
            Some(name) => Self::builtin(name),
            None => Self::from_expr(spec, spec),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        self.formula.source()
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.formula.eval(&[t])?)
    }
}

impl PhiSpec {
    pub fn from_expr(name: &str, src: &str) -> Result<Self> {
        Ok(PhiSpec {
            name: name.to_string(),
            formula: formula(src)?,
        })
    }

    /// φ(t) = t^r, the family that turns a θ-φ check into a θ check with
    /// exponent r.
    pub fn power(r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0 && r < 1.0) {
            return Err(Error::InvalidArgument(format!("power exponent {r} must lie in (0, 1)")));
        }
        Self::from_expr(&format!("power:{r}"), &format!("t^{r:?}"))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        if let Some(r) = name.strip_prefix("power:") {
            let r: f64 = r
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad power exponent `{r}`")))?;
            return Self::power(r);
        }
        match name {
            "half-plus-one" => Self::from_expr(name, "(t + 1) / 2"),
            _ => Err(Error::InvalidArgument(format!("unknown phi builtin `{name}`"))),
        }
    }

    pub fn parse(spec: &str) -> Result<Self> {
        match spec.strip_prefix("builtin:") {
            Some(name) => Self::builtin(name),
            None => Self::from_expr(spec, spec),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        self.formula.source()
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.formula.eval(&[t])?)
    }
}

/// The n-fold composition φⁿ(t); `n = 0` returns `t`.
pub fn iterate_phi(spec: &PhiSpec, t: f64, n: usize) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::InvalidArgument(format!("phi iterates start at t >= 1, got {t}")));
    }
    let mut cur = t;
    for k in 0..n {
        cur = spec.eval(cur)?;
        if cur < 1.0 {
            return Err(Error::Precondition(format!(
                "phi iterate {} of {t} left [1, inf): {cur}",
                k + 1
            )));
        }
    }
    Ok(cur)
}

/// Log-spaced grid with `per_decade` points per decade, both ends included.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite() && per_decade > 0) {
        return Err(Error::InvalidArgument(format!(
            "log grid needs 0 < lo < hi and per_decade > 0, got [{lo}, {hi}] x {per_decade}"
        )));
    }
    let (a, b) = (lo.log10(), hi.log10());
    let steps = (((b - a) * per_decade as f64).round() as usize).max(1);
    let mut g: Vec<f64> = (0..=steps)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / steps as f64))
        .collect();
    g[0] = lo;
    g[steps] = hi;
    Ok(g)
}

/// Default θ grid: 64 points per decade over [1e-8, 1e3].
pub fn default_theta_grid() -> Vec<f64> {
    log_grid(1e-8, 1e3, 64).expect("static grid")
}

/// Default φ grid: 64 points per decade over [1, 1e3].
pub fn default_phi_grid() -> Vec<f64> {
    log_grid(1.0, 1e3, 64).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaThresholds {
    /// Required bound on θ(t_last) − 1 for the vanishing sequence.
    pub limit_gap: f64,
    pub jump_factor: f64,
}

impl Default for ThetaThresholds {
    fn default() -> Self {
        ThetaThresholds {
            limit_gap: 1e-3,
            jump_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiThresholds {
    pub fixes_one: f64,
    /// Required bound on φ^depth(t) − 1.
    pub limit_gap: f64,
    pub jump_factor: f64,
}

impl Default for PhiThresholds {
    fn default() -> Self {
        PhiThresholds {
            fixes_one: 1e-12,
            limit_gap: 1e-6,
            jump_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    #[serde(with = "ext_float")]
    pub max_defect: f64,
    pub failures: u64,
    pub witnesses: Vec<Witness>,
}

impl PropertyCheck {
    fn new(property: &str) -> Self {
        PropertyCheck {
            property: property.to_string(),
            passed: true,
            max_defect: 0.0,
            failures: 0,
            witnesses: Vec::new(),
        }
    }

    fn fail(&mut self, defect: f64, t: Vec<f64>, values: Vec<f64>, note: String) {
        self.passed = false;
        self.failures += 1;
        self.max_defect = self.max_defect.max(defect);
        if self.witnesses.len() < WITNESS_CAP {
            self.witnesses.push(Witness { t, values, note });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub len: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub expression: String,
    pub passed: bool,
    pub grid: GridInfo,
    #[serde(with = "ext_float")]
    pub max_defect: f64,
    pub properties: Vec<PropertyCheck>,
}

impl ValidationReport {
    pub fn property(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.property == name)
    }

    fn assemble(subject: String, expression: String, grid: &[f64], properties: Vec<PropertyCheck>) -> Self {
        ValidationReport {
            subject,
            expression,
            passed: properties.iter().all(|p| p.passed),
            grid: GridInfo {
                len: grid.len(),
                min: grid[0],
                max: grid[grid.len() - 1],
            },
            max_defect: properties.iter().map(|p| p.max_defect).fold(0.0, f64::max),
            properties,
        }
    }
}

fn check_grid(grid: &[f64], lower: f64, inclusive: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("validation grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("validation grid must be strictly ascending".into()));
    }
    let ok = if inclusive { grid[0] >= lower } else { grid[0] > lower };
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "validation grid starts at {} but must lie in {}{lower}, inf)",
            grid[0],
            if inclusive { "[" } else { "(" }
        )));
    }
    Ok(())
}

fn continuity_proxy(grid: &[f64], values: &[f64], factor: f64) -> PropertyCheck {
    let mut check = PropertyCheck::new("continuity_proxy");
    let slopes: Vec<f64> = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (v[1] - v[0]).abs() / (t[1] - t[0]))
        .collect();
    // symmetric windows; edges cannot tell a jump from steep growth
    for i in 1..slopes.len().saturating_sub(1) {
        let k = 2.min(i).min(slopes.len() - 1 - i);
        let (lo, hi) = (i - k, i + k);
        let mut neighbors: Vec<f64> = (lo..=hi).filter(|&j| j != i).map(|j| slopes[j]).collect();
        neighbors.sort_by(f64::total_cmp);
        let median = neighbors[neighbors.len() / 2];
        let jump = (values[i + 1] - values[i]).abs();
        if slopes[i] > factor * median && jump > 1e-9 * (1.0 + values[i].abs()) {
            let defect = if median > 0.0 { slopes[i] / median } else { f64::INFINITY };
            check.fail(
                defect,
                vec![grid[i], grid[i + 1]],
                vec![values[i], values[i + 1]],
                format!("secant slope {} exceeds {factor}x neighbor median {median}", slopes[i]),
            );
        }
    }
    check
}

/// Samples the θ properties: range above 1, strict increase, θ(tₙ) → 1 along
/// tₙ = grid_min / 2ⁿ, and the continuity heuristic.
pub fn validate_theta(
    spec: &ThetaSpec,
    grid: &[f64],
    vanishing_seq_len: usize,
    thresholds: &ThetaThresholds,
) -> Result<ValidationReport> {
    check_grid(grid, 0.0, false)?;
    let values = grid.iter().map(|&t| spec.eval(t)).collect::<Result<Vec<_>>>()?;

    let mut range = PropertyCheck::new("range_above_one");
    for (&t, &v) in grid.iter().zip(&values) {
        if !(v > 1.0) {
            range.fail(1.0 - v, vec![t], vec![v], format!("theta({t}) = {v} is not > 1"));
        }
    }

    let mut mono = PropertyCheck::new("strictly_increasing");
    for i in 0..grid.len().saturating_sub(1) {
        if !(values[i + 1] > values[i]) {
            mono.fail(
                values[i] - values[i + 1],
                vec![grid[i], grid[i + 1]],
                vec![values[i], values[i + 1]],
                "theta does not increase between neighbors".into(),
            );
        }
    }

    let mut limit = PropertyCheck::new("vanishing_limit");
    let mut prev = None;
    let mut last = None;
    for n in 1..=vanishing_seq_len {
        let t = grid[0] / 2f64.powi(n as i32);
        let v = spec.eval(t)?;
        if let Some((pt, pv)) = prev {
            if v > pv {
                limit.fail(v - pv, vec![pt, t], vec![pv, v], "theta(t_n) increased as t_n shrank".into());
            }
        }
        prev = Some((t, v));
        last = Some((t, v));
    }
    if let Some((t, v)) = last {
        if !(v - 1.0 < thresholds.limit_gap) {
            limit.fail(
                v - 1.0 - thresholds.limit_gap,
                vec![t],
                vec![v],
                format!("theta(t_last) - 1 = {} is not < {}", v - 1.0, thresholds.limit_gap),
            );
        }
    }

    let cont = continuity_proxy(grid, &values, thresholds.jump_factor);
    Ok(ValidationReport::assemble(
        spec.name().to_string(),
        spec.source().to_string(),
        grid,
        vec![range, mono, limit, cont],
    ))
}

/// Samples the φ properties: nondecreasing, φ(1) = 1, φ(t) < t for t > 1,
/// φⁿ(t) nonincreasing in n with φ^depth(t) → 1, and the continuity heuristic.
pub fn validate_phi(
    spec: &PhiSpec,
    grid: &[f64],
    iterate_depth: usize,
    thresholds: &PhiThresholds,
) -> Result<ValidationReport> {
    check_grid(grid, 1.0, true)?;
    let values = grid.iter().map(|&t| spec.eval(t)).collect::<Result<Vec<_>>>()?;

    let mut mono = PropertyCheck::new("nondecreasing");
    for i in 0..grid.len().saturating_sub(1) {
        if values[i + 1] < values[i] {
            mono.fail(
                values[i] - values[i + 1],
                vec![grid[i], grid[i + 1]],
                vec![values[i], values[i + 1]],
                "phi decreases between neighbors".into(),
            );
        }
    }

    let mut one = PropertyCheck::new("fixes_one");
    let at_one = spec.eval(1.0)?;
    if !((at_one - 1.0).abs() <= thresholds.fixes_one) {
        one.fail((at_one - 1.0).abs(), vec![1.0], vec![at_one], format!("phi(1) = {at_one}"));
    }

    let mut below = PropertyCheck::new("below_identity");
    for (&t, &v) in grid.iter().zip(&values) {
        if t > 1.0 && !(v < t) {
            below.fail(v - t, vec![t], vec![v], format!("phi({t}) = {v} is not < {t}"));
        }
    }

    let mut iter = PropertyCheck::new("iterates_to_one");
    for &t in grid {
        let mut cur = t;
        let mut flagged = false;
        for n in 1..=iterate_depth {
            let next = spec.eval(cur)?;
            if next < 1.0 {
                return Err(Error::Precondition(format!(
                    "phi iterate {n} of {t} left [1, inf): {next}"
                )));
            }
            if next > cur && !flagged {
                iter.fail(next - cur, vec![t], vec![cur, next], format!("iterate {n} increased"));
                flagged = true;
            }
            cur = next;
        }
        if !(cur - 1.0 < thresholds.limit_gap) {
            iter.fail(
                cur - 1.0,
                vec![t],
                vec![cur],
                format!("phi^{iterate_depth}({t}) - 1 = {} is not < {}", cur - 1.0, thresholds.limit_gap),
            );
        }
    }

    let cont = continuity_proxy(grid, &values, thresholds.jump_factor);
    Ok(ValidationReport::assemble(
        spec.name().to_string(),
        spec.source().to_string(),
        grid,
        vec![mono, one, below, iter, cont],
    ))
}
