//! The `rqbm` command line.
//!
//! [`run`] parses arguments, executes one subcommand and returns the exit
//! code with the rendered report, so tests drive it without a subprocess.
//! Exit codes: 0 all checks passed, 1 a check failed, 2 usage or input error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::contraction::{self, BestExponent, Condition, ContractionCertificate, SelfMap};
use crate::error::{Error, Result};
use crate::instances::{self, InstanceBundle, PerturbKind, Profile, DEFAULT_GRID_B};
use crate::report::{Envelope, Format};
use crate::solver::{self, CauchyReport, FixedPointVerdict, PicardOptions, PicardTrace, UniquenessReport};
use crate::space::{
    self, Classification, IdentityReport, MinimalS, Point, RectangularReport, Sampling, ScanOptions, Space,
    DEFAULT_TOL,
};
use crate::thetaphi::{self, PhiSpec, PhiThresholds, ThetaSpec, ThetaThresholds, ValidationReport};

#[derive(Debug, Parser)]
#[command(name = "rqbm", version, about = "Checks rectangular quasi b-metric spaces, contraction conditions and Picard iteration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Identity axiom and b-rectangular inequality at the given or claimed s
    Verify {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        s: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Metric, b-metric, rectangular and RQB classification
    Classify {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        s: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Smallest s satisfying the b-rectangular inequality on the sample
    MinS {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sampled check of the theta family properties
    ValidateTheta {
        /// `builtin:<name>` or an expression in t
        #[arg(long)]
        theta: String,
        #[arg(long, default_value_t = 1e-8)]
        lo: f64,
        #[arg(long, default_value_t = 1e3)]
        hi: f64,
        #[arg(long, default_value_t = 64)]
        per_decade: usize,
        #[arg(long, default_value_t = 40)]
        vanishing_len: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sampled check of the phi family properties
    ValidatePhi {
        /// `builtin:<name>`, `builtin:power:<r>` or an expression in t
        #[arg(long)]
        phi: String,
        #[arg(long, default_value_t = 1.0)]
        lo: f64,
        #[arg(long, default_value_t = 1e3)]
        hi: f64,
        #[arg(long, default_value_t = 64)]
        per_decade: usize,
        #[arg(long, default_value_t = 256)]
        depth: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Pairwise contraction certificate for a self-map
    Contraction {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[command(flatten)]
        params: MapParams,
        #[arg(long)]
        k: Option<f64>,
        /// Also report the tightest exponent r for the theta condition
        #[arg(long)]
        best_r: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Picard iteration with optional diagnostics and uniqueness scan
    Solve {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        map: Option<String>,
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Cauchy diagnostics on the trace
        #[arg(long)]
        diagnostics: bool,
        #[arg(long, default_value_t = 1e-9)]
        diag_tol: f64,
        /// `all`, `grid:<n>` or a comma-separated list of points
        #[arg(long)]
        uniqueness_starts: Option<String>,
        /// Defaults to 100 * tol
        #[arg(long)]
        merge_tol: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Seeded random spaces, perturbed to break an axiom, then re-checked
    Falsify {
        #[arg(long, value_enum, default_value_t = ProfileArg::Metric)]
        profile: ProfileArg,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Shipped example instances
    Instances {
        #[command(subcommand)]
        action: InstancesAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum InstancesAction {
    List {
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
    },
    /// Writes the space file of an instance
    Export {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = DEFAULT_GRID_B)]
        grid_b: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    /// Space file (JSON)
    #[arg(long, conflicts_with = "instance", required_unless_present = "instance")]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub instance: Option<String>,
    /// Grid density on the interval part of shipped instances
    #[arg(long, default_value_t = DEFAULT_GRID_B)]
    pub grid_b: usize,
    /// Grid points for analytic spaces
    #[arg(long, default_value_t = 40)]
    pub grid: usize,
    /// Seeded random samples for analytic spaces
    #[arg(long, default_value_t = 10_000)]
    pub random: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MapParams {
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(name = "theta-r", alias = "theta_r")]
    ThetaR,
    #[value(name = "theta-phi", alias = "theta_phi")]
    ThetaPhi,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Metric,
    Quasi,
    Adversarial,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Metric => Profile::Metric,
            ProfileArg::Quasi => Profile::Quasi,
            ProfileArg::Adversarial => Profile::Adversarial,
        }
    }
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn usage(msg: String) -> Self {
        Outcome {
            code: 2,
            stdout: String::new(),
            stderr: msg,
        }
    }
}

/// Runs one command line (including the program name).
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome::usage(text)
            } else {
                Outcome {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(o) => o,
        Err(e) => Outcome::usage(format!("error: {e}\n")),
    }
}

/// Where a report goes and how it is rendered.
struct Sink {
    format: Format,
    out: Option<PathBuf>,
}

impl Sink {
    fn new(common: &CommonArgs) -> Self {
        Sink {
            format: common.format.into(),
            out: common.out.clone(),
        }
    }

    fn emit<T: Serialize>(&self, command: &str, passed: bool, result: T) -> Result<Outcome> {
        let env = Envelope::new(command, passed, result);
        let body = match self.format {
            Format::Json => env.to_json(),
            Format::Text => env.to_text(),
        };
        let stdout = match &self.out {
            Some(path) => {
                std::fs::write(path, &body)?;
                String::new()
            }
            None => body,
        };
        Ok(Outcome {
            code: if passed { 0 } else { 1 },
            stdout,
            stderr: String::new(),
        })
    }
}

struct Loaded {
    name: String,
    space: Space,
    bundle: Option<InstanceBundle>,
}

fn load(args: &SpaceArgs) -> Result<Loaded> {
    match (&args.space, &args.instance) {
        (Some(path), None) => Ok(Loaded {
            name: path.display().to_string(),
            space: Space::load(path)?,
            bundle: None,
        }),
        (None, Some(name)) => {
            let b = instances::by_name(name, args.grid_b)?;
            Ok(Loaded {
                name: b.name.clone(),
                space: b.space.clone(),
                bundle: Some(b),
            })
        }
        _ => Err(Error::InvalidArgument("give exactly one of --space or --instance".into())),
    }
}

fn sampling(args: &SpaceArgs, common: &CommonArgs) -> Sampling {
    Sampling {
        grid: args.grid,
        random: args.random,
        seed: common.seed,
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("--{name} must be a positive finite number")))
    }
}

fn resolve_s(given: Option<f64>, loaded: &Loaded) -> f64 {
    given
        .or_else(|| loaded.bundle.as_ref().and_then(|b| b.s))
        .or_else(|| loaded.space.claimed_s())
        .unwrap_or(1.0)
}

#[derive(Serialize)]
struct VerifyResult {
    space: String,
    s: f64,
    sampling: String,
    identity: IdentityReport,
    rectangular: RectangularReport,
}

#[derive(Serialize)]
struct ClassifyResult {
    space: String,
    classification: Classification,
}

#[derive(Serialize)]
struct MinSResult {
    space: String,
    sampling: String,
    minimal_s: MinimalS,
}

#[derive(Serialize)]
struct ContractionResult {
    space: String,
    certificate: ContractionCertificate,
    best_exponent: Option<BestExponent>,
}

#[derive(Serialize)]
struct SolveResult {
    space: String,
    map: String,
    trace: PicardTrace,
    fixed_point: Option<FixedPointVerdict>,
    diagnostics: Option<CauchyReport>,
    uniqueness: Option<UniquenessReport>,
}

#[derive(Serialize)]
struct FalsifyRun {
    seed: u64,
    base_identity_passed: bool,
    base_rectangular_passed: bool,
    identity_detected: bool,
    quadrilateral_detected: bool,
}

#[derive(Serialize)]
struct FalsifyResult {
    profile: Profile,
    n: usize,
    s: f64,
    generator: &'static str,
    seeds: u64,
    identity_detected: u64,
    quadrilateral_detected: u64,
    missed: Vec<FalsifyRun>,
}

fn execute(cmd: Command) -> Result<Outcome> {
    let opts = ScanOptions::default();
    match cmd {
        Command::Verify { space, s, common } => {
            let loaded = load(&space)?;
            let s = positive("s", resolve_s(s, &loaded))?;
            let smp = sampling(&space, &common);
            let identity = space::check_identity_axiom(&loaded.space, &smp, &opts)?;
            let rectangular = space::check_b_rectangular(&loaded.space, s, &smp, &opts)?;
            let passed = identity.passed && rectangular.outcome.passed();
            Sink::new(&common).emit(
                "verify",
                passed,
                VerifyResult {
                    space: loaded.name,
                    s,
                    sampling: smp.describe(&loaded.space),
                    identity,
                    rectangular,
                },
            )
        }
        Command::Classify { space, s, common } => {
            let loaded = load(&space)?;
            let s = s.map(|s| positive("s", s)).transpose()?;
            let smp = sampling(&space, &common);
            let classification = space::classify(&loaded.space, s, &smp, &opts)?;
            Sink::new(&common).emit(
                "classify",
                classification.is_rqb,
                ClassifyResult {
                    space: loaded.name,
                    classification,
                },
            )
        }
        Command::MinS { space, common } => {
            let loaded = load(&space)?;
            let smp = sampling(&space, &common);
            let minimal_s = space::minimal_rectangular_coefficient(&loaded.space, &smp)?;
            let passed = !matches!(minimal_s, MinimalS::Infinite { .. });
            Sink::new(&common).emit(
                "min-s",
                passed,
                MinSResult {
                    space: loaded.name,
                    sampling: smp.describe(&loaded.space),
                    minimal_s,
                },
            )
        }
        Command::ValidateTheta {
            theta,
            lo,
            hi,
            per_decade,
            vanishing_len,
            common,
        } => {
            let spec = ThetaSpec::parse(&theta)?;
            let grid = thetaphi::log_grid(lo, hi, per_decade)?;
            let report: ValidationReport =
                thetaphi::validate_theta(&spec, &grid, vanishing_len, &ThetaThresholds::default())?;
            Sink::new(&common).emit("validate-theta", report.passed, report)
        }
        Command::ValidatePhi {
            phi,
            lo,
            hi,
            per_decade,
            depth,
            common,
        } => {
            let spec = PhiSpec::parse(&phi)?;
            let grid = thetaphi::log_grid(lo, hi, per_decade)?;
            let report = thetaphi::validate_phi(&spec, &grid, depth, &PhiThresholds::default())?;
            Sink::new(&common).emit("validate-phi", report.passed, report)
        }
        Command::Contraction {
            space,
            kind,
            params,
            k,
            best_r,
            common,
        } => {
            let loaded = load(&space)?;
            let bundle = loaded.bundle.as_ref();
            let map = resolve_map(params.map.as_deref(), bundle)?;
            let s = positive("s", resolve_s(params.s, &loaded))?;
            let theta_src = params.theta.clone().or_else(|| bundle.and_then(|b| b.theta.clone()));
            let phi_src = params.phi.clone().or_else(|| bundle.and_then(|b| b.phi.clone()));
            let r = params.r.or_else(|| bundle.and_then(|b| b.r));
            let kind = kind.unwrap_or(if k.is_some() {
                KindArg::Linear
            } else if phi_src.is_some() && params.r.is_none() {
                KindArg::ThetaPhi
            } else {
                KindArg::ThetaR
            });
            let theta = || -> Result<ThetaSpec> {
                ThetaSpec::parse(theta_src.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("this contraction kind needs --theta".into())
                })?)
            };
            let cond = match kind {
                KindArg::ThetaR => Condition::ThetaPower {
                    theta: theta()?,
                    r: r.ok_or_else(|| Error::InvalidArgument("theta-r needs --r".into()))?,
                },
                KindArg::ThetaPhi => Condition::ThetaPhi {
                    theta: theta()?,
                    phi: PhiSpec::parse(phi_src.as_deref().ok_or_else(|| {
                        Error::InvalidArgument("theta-phi needs --phi".into())
                    })?)?,
                },
                KindArg::Linear => Condition::Linear {
                    k: k.ok_or_else(|| Error::InvalidArgument("linear needs --k".into()))?,
                },
            };
            let smp = sampling(&space, &common);
            let certificate = contraction::certify(&loaded.space, &map, &cond, s, &smp, DEFAULT_TOL)?;
            let best_exponent = if best_r {
                Some(contraction::best_exponent(&loaded.space, &map, &theta()?, s, &smp)?)
            } else {
                None
            };
            Sink::new(&common).emit(
                "contraction",
                certificate.passed(),
                ContractionResult {
                    space: loaded.name,
                    certificate,
                    best_exponent,
                },
            )
        }
        Command::Solve {
            space,
            map,
            start,
            max_iter,
            tol,
            diagnostics,
            diag_tol,
            uniqueness_starts,
            merge_tol,
            common,
        } => {
            let loaded = load(&space)?;
            let bundle = loaded.bundle.as_ref();
            let map = resolve_map(map.as_deref(), bundle)?;
            let start = start
                .or_else(|| bundle.and_then(|b| b.start.clone()))
                .ok_or_else(|| Error::InvalidArgument("solve needs --start".into()))?;
            let x0 = loaded.space.point(&start)?;
            let popts = PicardOptions {
                max_iter,
                tol: positive("tol", tol)?,
            };
            let trace = solver::picard_iterate(&loaded.space, &map, &x0, &popts)?;
            let fixed_point = match &trace.limit {
                Some(z) => Some(solver::verify_fixed_point(&loaded.space, &map, z, 10.0 * tol)?),
                None => None,
            };
            let diagnostics = if diagnostics {
                Some(solver::cauchy_diagnostics(&trace, diag_tol)?)
            } else {
                None
            };
            let uniqueness = match uniqueness_starts {
                Some(spec) => {
                    let starts = parse_starts(&loaded.space, &spec)?;
                    let merge = positive("merge-tol", merge_tol.unwrap_or(100.0 * tol))?;
                    Some(solver::uniqueness_scan(&loaded.space, &map, &starts, &popts, merge)?)
                }
                None => None,
            };
            let passed = fixed_point.as_ref().is_some_and(|v| v.verified)
                && diagnostics.as_ref().is_none_or(|d| d.passed)
                && uniqueness.as_ref().is_none_or(|u| u.passed);
            Sink::new(&common).emit(
                "solve",
                passed,
                SolveResult {
                    space: loaded.name,
                    map: map.describe(),
                    trace,
                    fixed_point,
                    diagnostics,
                    uniqueness,
                },
            )
        }
        Command::Falsify {
            profile,
            n,
            seeds,
            common,
        } => {
            let profile: Profile = profile.into();
            let smp = Sampling {
                seed: common.seed,
                ..Sampling::default()
            };
            let mut result = FalsifyResult {
                profile,
                n,
                s: profile.s(),
                generator: "chacha8",
                seeds,
                identity_detected: 0,
                quadrilateral_detected: 0,
                missed: Vec::new(),
            };
            for k in 0..seeds {
                let seed = common.seed.wrapping_add(k);
                let base = instances::random_space(n, seed, profile)?;
                let fs = base.as_finite().expect("random spaces are finite");
                let broken_id = instances::perturb(fs, PerturbKind::BreakIdentity, seed)?;
                let broken_quad = instances::perturb(fs, PerturbKind::BreakQuadrilateral, seed)?;
                let run = FalsifyRun {
                    seed,
                    base_identity_passed: space::check_identity_axiom(&base, &smp, &opts)?.passed,
                    base_rectangular_passed: space::check_b_rectangular(&base, profile.s(), &smp, &opts)?
                        .outcome
                        .passed(),
                    identity_detected: !space::check_identity_axiom(&broken_id, &smp, &opts)?.passed,
                    quadrilateral_detected: !space::check_b_rectangular(&broken_quad, profile.s(), &smp, &opts)?
                        .outcome
                        .passed(),
                };
                result.identity_detected += run.identity_detected as u64;
                result.quadrilateral_detected += run.quadrilateral_detected as u64;
                if !(run.identity_detected && run.quadrilateral_detected) {
                    result.missed.push(run);
                }
            }
            let passed = result.missed.is_empty();
            Sink::new(&common).emit("falsify", passed, result)
        }
        Command::Instances { action } => match action {
            InstancesAction::List { format } => Sink {
                format: format.into(),
                out: None,
            }
            .emit("instances list", true, instances::list()),
            InstancesAction::Export { name, grid_b, out } => {
                let bundle = instances::by_name(&name, grid_b)?;
                let mut text = bundle.space.to_file().to_json();
                text.push('\n');
                let stdout = match out {
                    Some(path) => {
                        std::fs::write(path, &text)?;
                        String::new()
                    }
                    None => text,
                };
                Ok(Outcome {
                    code: 0,
                    stdout,
                    stderr: String::new(),
                })
            }
        },
    }
}

fn resolve_map(src: Option<&str>, bundle: Option<&InstanceBundle>) -> Result<SelfMap> {
    match (src, bundle.and_then(|b| b.map.clone())) {
        (Some(src), _) => SelfMap::parse(src),
        (None, Some(m)) => Ok(m),
        (None, None) => Err(Error::InvalidArgument("this command needs --map".into())),
    }
}

/// `all` (every carrier point, or the analytic grid), `grid:<n>`, or a comma list.
fn parse_starts(space: &Space, spec: &str) -> Result<Vec<Point>> {
    let spec = spec.trim();
    if spec == "all" {
        return Ok(space.carrier(40)?.points);
    }
    if let Some(n) = spec.strip_prefix("grid:") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad grid size `{n}`")))?;
        let interval = match space {
            Space::Analytic(a) => a.domain(),
            Space::Finite(f) => f.continuum().ok_or_else(|| {
                Error::InvalidArgument("grid starts need an analytic space or a continuum".into())
            })?,
        };
        return interval.grid(n).into_iter().map(|v| space.point_at(v)).collect();
    }
    spec.split(',').map(|p| space.point(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Outcome {
        run(std::iter::once("rqbm").chain(args.iter().copied()))
    }

    #[test]
    fn verify_exit_codes() {
        assert_eq!(run_args(&["verify", "--instance", "example-2-3", "--s", "3"]).code, 0);
        let o = run_args(&["verify", "--instance", "example-2-3", "--s", "1"]);
        assert_eq!(o.code, 1);
        assert!(o.stdout.contains("\"violations\": ["));
    }

    #[test]
    fn solve_final_example() {
        let o = run_args(&["solve", "--instance", "example-final", "--start", "1/3"]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
        assert_eq!(v["result"]["trace"]["limit"]["value"], 1.0);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_args(&["verify"]).code, 2);
        assert_eq!(run_args(&["nonsense"]).code, 2);
        let o = run_args(&["solve", "--instance", "example-sqrt", "--map", "sqrt(x"]);
        assert_eq!(o.code, 2);
        assert!(o.stderr.contains("byte offset 6"), "{}", o.stderr);
        assert_eq!(run_args(&["--help"]).code, 0);
    }

    #[test]
    fn text_format() {
        let o = run_args(&["min-s", "--instance", "example-2-3", "--format", "text"]);
        assert_eq!(o.code, 0);
        assert!(o.stdout.contains("result.minimal_s.kind"));
    }

    #[test]
    fn starts_parsing() {
        let b = instances::build_example_final(11).unwrap();
        assert_eq!(parse_starts(&b.space, "all").unwrap().len(), 15);
        assert_eq!(parse_starts(&b.space, "grid:3").unwrap().len(), 3);
        assert_eq!(parse_starts(&b.space, "1/3, 1").unwrap().len(), 2);
        assert!(parse_starts(&b.space, "grid:x").is_err());
    }
}
