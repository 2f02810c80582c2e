//! Worked example fixtures and seeded generators.
//!
//! Every bundle is assembled as a [`SpaceFile`] and loaded through
//! [`SpaceFile::build`], so fixtures exercise the same path as user files.
//! Mixed label/interval carriers `A ∪ B` are stored as the labels of `A` plus
//! a `grid_b`-point grid on `B`, with `B` kept as the continuum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contraction::SelfMap;
use crate::error::{Error, Result};
use crate::space::{FiniteSpace, Interval, OverrideEntry, Point, Space, SpaceFile, SpaceKind};

pub const DEFAULT_GRID_B: usize = 11;

/// A space together with the map and parameters it is meant to be run with.
#[derive(Debug, Clone)]
pub struct InstanceBundle {
    pub name: String,
    pub file: SpaceFile,
    pub space: Space,
    pub map: Option<SelfMap>,
    pub theta: Option<String>,
    pub phi: Option<String>,
    pub r: Option<f64>,
    pub s: Option<f64>,
    /// A start point that makes a sensible Picard demo.
    pub start: Option<String>,
    pub expected_fixed_point: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub name: &'static str,
    pub kind: SpaceKind,
    pub description: &'static str,
}

pub const INSTANCES: &[InstanceInfo] = &[
    InstanceInfo {
        name: "example-2-3",
        kind: SpaceKind::Finite,
        description: "labels 1/2..1/7 with an asymmetric table, (x - y)^2 on a grid of [1, 2], s = 3",
    },
    InstanceInfo {
        name: "example-sqrt",
        kind: SpaceKind::Analytic,
        description: "piecewise-square quasi-distance on [1, 2], T(x) = sqrt(x), theta = e^sqrt(t), r = 1/2",
    },
    InstanceInfo {
        name: "example-fourth-root",
        kind: SpaceKind::Analytic,
        description: "piecewise-square quasi-distance on [1, 2], T(x) = x^(1/4), theta = e^sqrt(t), r = 1/2",
    },
    InstanceInfo {
        name: "example-final",
        kind: SpaceKind::Finite,
        description: "labels 1/3..1/6 with a table, (x - y)^2 on a grid of [1/2, 3/2], piecewise T, theta-phi pair, s = 3",
    },
];

pub fn list() -> &'static [InstanceInfo] {
    INSTANCES
}

/// Looks up a shipped instance; `grid_b` sets the interval grid density.
pub fn by_name(name: &str, grid_b: usize) -> Result<InstanceBundle> {
    match name {
        "example-2-3" => build_example_2_3(grid_b),
        "example-sqrt" => build_example_sqrt(SqrtVariant::Sqrt),
        "example-fourth-root" => build_example_sqrt(SqrtVariant::FourthRoot),
        "example-final" => build_example_final(grid_b),
        other => Err(Error::InvalidArgument(format!(
            "unknown instance `{other}` (known: {})",
            INSTANCES.iter().map(|i| i.name).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// `1/n` as a labelled point; the value is converted from the exact ratio once.
fn unit_fraction(n: u32) -> Point {
    Point::new(format!("1/{n}"), 1.0 / n as f64)
}

/// `m` points `(lo_num·(m-1) + i·span_num) / (den·(m-1))`, so grid values are
/// exact ratios rather than accumulated sums.
fn rational_grid(lo_num: i64, span_num: i64, den: i64, m: usize) -> Result<Vec<Point>> {
    if m < 2 {
        return Err(Error::InvalidArgument("grid_b must be at least 2".into()));
    }
    let k = (m - 1) as i64;
    Ok((0..=k)
        .map(|i| Point::from_value((lo_num * k + i * span_num) as f64 / (den * k) as f64))
        .collect())
}

/// Adds `(b, a, d)` for every listed `(a, b, d)` whose reverse is not listed.
fn fill_reverse(listed: &[(u32, u32, f64)]) -> Vec<OverrideEntry> {
    let mut out: Vec<OverrideEntry> = listed
        .iter()
        .map(|&(a, b, d)| OverrideEntry::new(format!("1/{a}"), format!("1/{b}"), d))
        .collect();
    for &(a, b, d) in listed {
        if !listed.iter().any(|&(x, y, _)| x == b && y == a) {
            out.push(OverrideEntry::new(format!("1/{b}"), format!("1/{a}"), d));
        }
    }
    out
}

fn finite_file(
    points: Vec<Point>,
    overrides: Vec<OverrideEntry>,
    continuum: Interval,
    claimed_s: f64,
) -> SpaceFile {
    SpaceFile {
        kind: SpaceKind::Finite,
        points,
        default: Some("(x - y)^2".into()),
        overrides,
        continuum: Some(continuum),
        domain: None,
        forward: None,
        claimed_s: Some(claimed_s),
    }
}

/// Labels `1/2..1/7` with 21 listed ordered distances (reverse pairs filled
/// from the listed direction), `(x - y)^2` elsewhere, `B = [1, 2]`.
pub fn build_example_2_3(grid_b: usize) -> Result<InstanceBundle> {
    let listed: &[(u32, u32, f64)] = &[
        (2, 3, 0.05),
        (4, 5, 0.05),
        (6, 7, 0.05),
        (3, 2, 0.04),
        (5, 4, 0.04),
        (7, 6, 0.04),
        (2, 4, 0.08),
        (3, 7, 0.08),
        (5, 6, 0.08),
        (4, 2, 0.05),
        (7, 3, 0.05),
        (6, 5, 0.05),
        (2, 6, 0.4),
        (3, 4, 0.4),
        (5, 7, 0.4),
        (2, 5, 0.24),
        (3, 6, 0.24),
        (4, 7, 0.24),
        (2, 7, 0.15),
        (3, 5, 0.15),
        (4, 6, 0.15),
    ];
    let mut points: Vec<Point> = (2..=7).map(unit_fraction).collect();
    points.extend(rational_grid(1, 1, 1, grid_b)?);
    let file = finite_file(points, fill_reverse(listed), Interval::new(1.0, 2.0)?, 3.0);
    Ok(InstanceBundle {
        name: "example-2-3".into(),
        space: file.build()?,
        file,
        map: None,
        theta: None,
        phi: None,
        r: None,
        s: Some(3.0),
        start: None,
        expected_fixed_point: None,
        note: "unlisted reverse pairs over the labels take the listed direction's value".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtVariant {
    Sqrt,
    FourthRoot,
}

/// `η(x, y) = (x - y)^2` for `x ≥ y`, `(y - x)^2 / 2` otherwise, on `[1, 2]`.
pub fn build_example_sqrt(variant: SqrtVariant) -> Result<InstanceBundle> {
    let file = SpaceFile {
        kind: SpaceKind::Analytic,
        points: Vec::new(),
        default: None,
        overrides: Vec::new(),
        continuum: None,
        domain: Some(Interval::new(1.0, 2.0)?),
        forward: Some("if(x >= y, (x - y)^2, 0.5 * (y - x)^2)".into()),
        claimed_s: Some(2.0),
    };
    let (name, map) = match variant {
        SqrtVariant::Sqrt => ("example-sqrt", "sqrt(x)"),
        SqrtVariant::FourthRoot => ("example-fourth-root", "x^0.25"),
    };
    Ok(InstanceBundle {
        name: name.into(),
        space: file.build()?,
        file,
        map: Some(SelfMap::parse(map)?),
        theta: Some("builtin:exp-sqrt".into()),
        phi: None,
        r: Some(0.5),
        s: Some(2.0),
        start: Some("2".into()),
        expected_fixed_point: Some(1.0),
        note: "fixed point 1 is the only solution of T(x) = x in [1, 2]; a value of 1/3 would lie outside the domain".into(),
    })
}

/// Labels `1/3..1/6` with a listed table, `(x - y)^2` elsewhere,
/// `B = [1/2, 3/2]`, `T = 1` on the labels and `(√x + 3)/4` on `B`.
pub fn build_example_final(grid_b: usize) -> Result<InstanceBundle> {
    let listed: &[(u32, u32, f64)] = &[
        (3, 4, 0.1),
        (4, 5, 0.1),
        (4, 3, 0.05),
        (5, 4, 0.05),
        (3, 5, 0.05),
        (4, 6, 0.05),
        (5, 3, 0.1),
        (6, 4, 0.1),
        (3, 6, 0.5),
        (5, 6, 0.5),
    ];
    let mut points: Vec<Point> = (3..=6).map(unit_fraction).collect();
    points.extend(rational_grid(1, 2, 2, grid_b)?);
    let file = finite_file(points, fill_reverse(listed), Interval::new(0.5, 1.5)?, 3.0);
    Ok(InstanceBundle {
        name: "example-final".into(),
        space: file.build()?,
        file,
        map: Some(SelfMap::parse("if(x < 0.5, 1, (sqrt(x) + 3) / 4)")?),
        theta: Some("builtin:sqrt-plus-one".into()),
        phi: Some("builtin:half-plus-one".into()),
        r: None,
        s: Some(3.0),
        start: Some("1/3".into()),
        expected_fixed_point: Some(1.0),
        note: "unlisted reverse pairs over the labels take the listed direction's value".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Metric,
    Quasi,
    Adversarial,
}

impl Profile {
    /// Coefficient the profile is built to satisfy: per-direction scaling in
    /// `[0.5, 2]` distorts any ratio by at most 4.
    pub fn s(self) -> f64 {
        match self {
            Profile::Metric => 1.0,
            Profile::Quasi | Profile::Adversarial => 4.0,
        }
    }
}

/// `n` seeded points in the unit square.
pub fn random_planar_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect()
}

fn label(i: usize) -> String {
    format!("p{i}")
}

/// A finite space on labels `p0..p{n-1}` (value = index) with a full
/// distance table built from seeded planar points.
pub fn random_space(n: usize, seed: u64, profile: Profile) -> Result<Space> {
    if n < 2 {
        return Err(Error::InvalidArgument("random_space needs n >= 2".into()));
    }
    let pts = random_planar_points(n, seed);
    // separate stream so the geometry is shared across profiles
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                table[i * n + j] = dx.hypot(dy);
            }
        }
    }
    if profile != Profile::Metric {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    table[i * n + j] *= rng.random_range(0.5..=2.0);
                }
            }
        }
    }
    if profile == Profile::Adversarial {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        table[i * n + j] *= rng.random_range(5.0..=50.0);
    }
    let points = (0..n).map(|i| Point::new(label(i), i as f64)).collect();
    let mut overrides = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                overrides.push(OverrideEntry::new(label(i), label(j), table[i * n + j]));
            }
        }
    }
    SpaceFile {
        kind: SpaceKind::Finite,
        points,
        default: None,
        overrides,
        continuum: None,
        domain: None,
        forward: None,
        claimed_s: Some(profile.s()),
    }
    .build()
}

/// A table map on `random_space(n, seed, _)`: each planar point moves to
/// `c + λ(p - c)` and snaps to the nearest carrier point. The centre and
/// `λ ∈ [0.2, 0.8]` come from `map_seed`.
pub fn random_affine_map(n: usize, seed: u64, map_seed: u64) -> SelfMap {
    let pts = random_planar_points(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(map_seed);
    rng.set_stream(2);
    let c = pts[rng.random_range(0..n)];
    let lambda = rng.random_range(0.2..=0.8);
    SelfMap::table((0..n).map(|i| {
        let target = (c.0 + lambda * (pts[i].0 - c.0), c.1 + lambda * (pts[i].1 - c.1));
        let nearest = (0..n)
            .min_by(|&a, &b| {
                let da = (pts[a].0 - target.0).hypot(pts[a].1 - target.1);
                let db = (pts[b].0 - target.0).hypot(pts[b].1 - target.1);
                da.total_cmp(&db)
            })
            .expect("n >= 1");
        (label(i), label(nearest))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    BreakIdentity,
    BreakQuadrilateral,
}

/// Returns a copy of `space` that must fail one axiom check.
///
/// `BreakIdentity` zeroes one seeded positive off-diagonal distance.
/// `BreakQuadrilateral` picks a seeded ordered pair `(x, y)` and sets
/// `d(x, y)` above `s` times its cheapest three-hop detour, where `s` is the
/// claimed coefficient (1 if unset).
pub fn perturb(space: &FiniteSpace, kind: PerturbKind, seed: u64) -> Result<Space> {
    let n = space.len();
    let pts = space.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, j, d) = match kind {
        PerturbKind::BreakIdentity => {
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && space.d(i, j) > 0.0)
                .collect();
            if candidates.is_empty() {
                return Err(Error::Perturb("no positive off-diagonal distance to zero".into()));
            }
            let (i, j) = candidates[rng.random_range(0..candidates.len())];
            (i, j, 0.0)
        }
        PerturbKind::BreakQuadrilateral => {
            if n < 4 {
                return Err(Error::Perturb(format!(
                    "need at least 4 points for a quadrilateral, have {n}"
                )));
            }
            let s = space.claimed_s().unwrap_or(1.0);
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            let mut best = f64::INFINITY;
            for u in (0..n).filter(|&u| u != i && u != j) {
                for v in (0..n).filter(|&v| v != i && v != j && v != u) {
                    best = best.min(space.d(i, u) + space.d(u, v) + space.d(v, j));
                }
            }
            let factor = rng.random_range(1.5..=3.0);
            (i, j, s * best * factor + 1e-3)
        }
    };
    let mut file = Space::Finite(space.clone()).to_file();
    let (from, to) = (pts[i].label.clone(), pts[j].label.clone());
    file.overrides.retain(|o| !(o.from == from && o.to == to));
    file.overrides.push(OverrideEntry::new(from, to, d));
    file.build()
}
