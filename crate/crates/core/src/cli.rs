//! Command-line front end: config loading, dispatch, file emission.
//!
//! Exit codes are the machine contract: 0 success, 1 config problems,
//! 2 non-convergence (descent budget or shooting exhausted), 3 degenerate
//! geometry (non-Lorentzian metric or singular reduction). Human-readable
//! summaries go to stderr; machine output goes to CSV and JSON files in the
//! output directory.

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hypocheck::{run_audit, AuditConfig};
use crate::optimizer::{solve, SolveOptions};
use crate::oracle::{self, ChristoffelMode, OdeAudit, ShootOptions};
use crate::pathspace::write_csv;
use crate::reduction::BoundaryData;
use crate::spacetime::{GodelSpacetime, Preset, RiemannianBase};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "godel-geo",
    version,
    about = "Geodesics of Godel-type product spacetimes: variational solver, shooting oracle, hypothesis auditor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the reduced functional and reconstruct the fiber components.
    Solve(RunArgs),
    /// Integrate the geodesic equation and shoot for the far endpoint.
    Oracle(RunArgs),
    /// Sample the hypotheses of the connectedness guarantees.
    Audit(RunArgs),
    /// Solve variationally, then cross-check against the shooting oracle.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for solver and audit randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid override: segments per path.
    #[arg(long)]
    n: Option<usize>,
}

/// Parses the process arguments, dispatches, and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    init_thread_pool();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::NonLorentzian { .. }
        | Error::SingularL { .. }
        | Error::GammaUndefined { .. }
        | Error::NotPositiveDefinite { .. } => EXIT_DEGENERATE,
        Error::ShootingFailed { .. }
        | Error::StepRejected { .. }
        | Error::Inconsistency(_)
        | Error::GridMismatch(_) => EXIT_NO_CONVERGENCE,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::ExprDomain { .. }
        | Error::DimMismatch { .. }
        | Error::InvalidParameter(_)
        | Error::PresetMismatch(_)
        | Error::Csv { .. }
        | Error::Io(_) => EXIT_CONFIG,
    }
}

/// Honors GODEL_GEO_THREADS when set; silently keeps the default pool when
/// it was already initialized.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("GODEL_GEO_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring GODEL_GEO_THREADS={v}: not a positive integer"),
        }
    }
}

/// The run configuration file, one table per concern.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    spacetime: SpacetimeSection,
    endpoints: Option<EndpointsSection>,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    oracle: OracleSection,
    audit: Option<AuditSection>,
    #[serde(default)]
    output: OutputSection,
}

/// Either a named preset (with parameters) or verbatim coefficient
/// expressions; exactly one of the two.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpacetimeSection {
    preset: Option<String>,
    #[serde(default)]
    params: HashMap<String, f64>,
    a: Option<String>,
    b: Option<String>,
    c: Option<String>,
    /// Warp factor expression, static_embed preset only.
    beta: Option<String>,
    dim: Option<usize>,
    /// Upper-triangle base metric expressions, row by row; identity when
    /// omitted.
    base: Option<Vec<String>>,
    /// Declares the base metric complete (the existence guarantees need it).
    complete: Option<bool>,
}

impl SpacetimeSection {
    fn build(&self) -> Result<GodelSpacetime> {
        let explicit = self.a.is_some() || self.b.is_some() || self.c.is_some();
        match (&self.preset, explicit) {
            (Some(_), true) => Err(Error::Config(
                "[spacetime] must give either `preset` or explicit a/b/c expressions, not both"
                    .into(),
            )),
            (None, false) => Err(Error::Config(
                "[spacetime] needs a `preset` or explicit a/b/c expressions".into(),
            )),
            (Some(name), false) => GodelSpacetime::preset(self.named_preset(name)?),
            (None, true) => self.build_explicit(),
        }
    }

    fn named_preset(&self, name: &str) -> Result<Preset> {
        let param = |key: &str, default: f64| self.params.get(key).copied().unwrap_or(default);
        match name {
            "flat" => Ok(Preset::Flat),
            "godel" => Ok(Preset::Godel {
                omega: param("omega", 1.0),
            }),
            "case_i" => Ok(Preset::CaseI),
            "case_ii" => Ok(Preset::CaseII),
            "case_iii" => Ok(Preset::CaseIII {
                eps: param("eps", 0.05),
            }),
            "case_iv" => Ok(Preset::CaseIV {
                eps: param("eps", 0.05),
            }),
            "static_embed" => Ok(Preset::StaticEmbed {
                beta: self.beta.clone().ok_or_else(|| {
                    Error::Config("the static_embed preset needs `beta = \"<expr>\"`".into())
                })?,
                dim: self.dim.unwrap_or(2),
                params: self.params.clone(),
            }),
            other => Err(Error::Config(format!(
                "unknown preset `{other}`; valid: flat, godel, static_embed, case_i, case_ii, case_iii, case_iv"
            ))),
        }
    }

    fn build_explicit(&self) -> Result<GodelSpacetime> {
        let get = |field: &Option<String>, name: &str| {
            field.clone().ok_or_else(|| {
                Error::Config(format!(
                    "explicit [spacetime] needs all of a, b, c; `{name}` is missing"
                ))
            })
        };
        let dim = self.dim.unwrap_or(2);
        if dim == 0 {
            return Err(Error::Config("spacetime.dim must be positive".into()));
        }
        let a = crate::exprdsl::parse(&get(&self.a, "a")?, &self.params, dim)?;
        let b = crate::exprdsl::parse(&get(&self.b, "b")?, &self.params, dim)?;
        let c = crate::exprdsl::parse(&get(&self.c, "c")?, &self.params, dim)?;
        let complete = self.complete.unwrap_or(true);
        let base = match &self.base {
            None => RiemannianBase::flat(dim),
            Some(upper) => {
                let exprs = upper
                    .iter()
                    .map(|src| crate::exprdsl::parse(src, &self.params, dim))
                    .collect::<Result<Vec<_>>>()?;
                RiemannianBase::from_upper_triangle(dim, exprs, complete)?
            }
        };
        GodelSpacetime::new(base, a, b, c)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointsSection {
    x_p: Vec<f64>,
    x_q: Vec<f64>,
    #[serde(default)]
    y_p: f64,
    #[serde(default)]
    y_q: f64,
    #[serde(default)]
    t_p: f64,
    #[serde(default)]
    t_q: f64,
}

impl EndpointsSection {
    fn boundary(&self) -> Result<BoundaryData> {
        BoundaryData::new(
            self.x_p.clone(),
            self.x_q.clone(),
            self.y_p,
            self.y_q,
            self.t_p,
            self.t_q,
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolverSection {
    n: usize,
    grad_tol: f64,
    max_iters: usize,
    multistart: usize,
    perturb_modes: usize,
    perturb_amp: f64,
    seed: u64,
    lbfgs: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolverSection {
            n: o.n,
            grad_tol: o.grad_tol,
            max_iters: o.max_iters,
            multistart: o.multistart,
            perturb_modes: o.perturb_modes,
            perturb_amp: o.perturb_amp,
            seed: o.seed,
            lbfgs: o.lbfgs,
        }
    }
}

impl SolverSection {
    fn to_options(&self) -> SolveOptions {
        SolveOptions {
            n: self.n,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            multistart: self.multistart,
            perturb_modes: self.perturb_modes,
            perturb_amp: self.perturb_amp,
            seed: self.seed,
            lbfgs: self.lbfgs,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OracleSection {
    steps: usize,
    tol: f64,
    max_iters: usize,
    /// Finite-difference step of the shooting Jacobian.
    newton_step: f64,
    /// "exact" or "fd".
    christoffel: String,
    /// Central-difference step when christoffel = "fd".
    christoffel_step: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let o = ShootOptions::default();
        OracleSection {
            steps: o.steps,
            tol: o.tol,
            max_iters: o.max_iters,
            newton_step: o.fd_step,
            christoffel: "exact".into(),
            christoffel_step: 1e-5,
        }
    }
}

impl OracleSection {
    fn to_options(&self) -> Result<ShootOptions> {
        let mode = match self.christoffel.as_str() {
            "exact" => ChristoffelMode::Exact,
            "fd" => ChristoffelMode::FiniteDifference {
                step: self.christoffel_step,
            },
            other => {
                return Err(Error::Config(format!(
                    "oracle.christoffel must be \"exact\" or \"fd\", got \"{other}\""
                )))
            }
        };
        Ok(ShootOptions {
            steps: self.steps,
            tol: self.tol,
            max_iters: self.max_iters,
            fd_step: self.newton_step,
            mode,
            ..ShootOptions::default()
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditSection {
    region: Vec<[f64; 2]>,
    point_samples: Option<usize>,
    path_samples: Option<usize>,
    path_n: Option<usize>,
    seed: Option<u64>,
    base_point: Option<Vec<f64>>,
    endpoint_p: Option<Vec<[f64; 2]>>,
    endpoint_q: Option<Vec<[f64; 2]>>,
    bump_modes: Option<usize>,
    bump_amp: Option<f64>,
}

impl AuditSection {
    fn to_config(&self) -> Result<AuditConfig> {
        let pairs = |b: &[[f64; 2]]| b.iter().map(|&[lo, hi]| (lo, hi)).collect::<Vec<_>>();
        let mut cfg = AuditConfig::new(pairs(&self.region));
        if let Some(v) = self.point_samples {
            cfg.point_samples = v;
        }
        if let Some(v) = self.path_samples {
            cfg.path_samples = v;
        }
        if let Some(v) = self.path_n {
            cfg.path_n = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.base_point = self.base_point.clone();
        cfg.endpoint_boxes = match (&self.endpoint_p, &self.endpoint_q) {
            (None, None) => None,
            (Some(p), Some(q)) => Some((pairs(p), pairs(q))),
            _ => {
                return Err(Error::Config(
                    "audit.endpoint_p and audit.endpoint_q must be given together".into(),
                ))
            }
        };
        if let Some(v) = self.bump_modes {
            cfg.bump_modes = v;
        }
        if let Some(v) = self.bump_amp {
            cfg.bump_amp = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

/// A parsed, validated run with its provenance hash.
struct Loaded {
    cfg: RunConfig,
    st: GodelSpacetime,
    hash: String,
    out_dir: PathBuf,
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let raw = fs::read_to_string(&args.config).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg: RunConfig = toml::from_str(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
        if let Some(a) = &mut cfg.audit {
            a.seed = Some(seed);
        }
    }
    if let Some(n) = args.n {
        if n < 2 {
            return Err(Error::Config("--n must be at least 2".into()));
        }
        cfg.solver.n = n;
    }
    let st = cfg.spacetime.build()?;
    if let Some(ep) = &cfg.endpoints {
        if ep.x_p.len() != st.dim() || ep.x_q.len() != st.dim() {
            return Err(Error::Config(format!(
                "endpoints have dimension {}/{}, the spacetime base has {}",
                ep.x_p.len(),
                ep.x_q.len(),
                st.dim()
            )));
        }
    }
    let digest = Sha256::digest(raw.as_bytes());
    let hash: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;
    Ok(Loaded {
        cfg,
        st,
        hash,
        out_dir,
    })
}

fn boundary_of(cfg: &RunConfig) -> Result<BoundaryData> {
    cfg.endpoints
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs an [endpoints] section".into()))?
        .boundary()
}

fn csv_comments(hash: &str, command: &str, seed: u64) -> Vec<String> {
    vec![
        format!(
            "godel-geo {} {command}, config sha256 {hash}",
            env!("CARGO_PKG_VERSION")
        ),
        format!("seed {seed}"),
    ]
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Inconsistency(format!("serialization failed: {e}")))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn write_curve_csv(
    path: &Path,
    curve: &crate::pathspace::DiscretePath,
    y: &crate::pathspace::FiberPath,
    t: &crate::pathspace::FiberPath,
    comments: &[String],
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_csv(&mut w, curve, Some((y, t)), comments)
}

fn cmd_solve(args: &RunArgs) -> Result<i32> {
    let run = load(args)?;
    let bd = boundary_of(&run.cfg)?;
    let opts = run.cfg.solver.to_options();
    let report = solve(&run.st, &bd, &opts)?;
    let comments = csv_comments(&run.hash, "solve", opts.seed);
    write_curve_csv(
        &run.out_dir.join("geodesic.csv"),
        &report.path,
        &report.reconstruction.y,
        &report.reconstruction.t,
        &comments,
    )?;
    write_json(&run.out_dir.join("solve_report.json"), &report)?;
    write_json(&run.out_dir.join("reduced_state.json"), &report.state)?;
    eprintln!(
        "solve: case {} J = {:.12e} after {} iterations (start {}), dual grad norm {:.3e}",
        report.state.case, report.state.j, report.iterations, report.start_index, report.grad_norm
    );
    eprintln!(
        "solve: closure ({:.3e}, {:.3e}), outputs in {}",
        report.reconstruction.closure_y,
        report.reconstruction.closure_t,
        run.out_dir.display()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "solve: did not reach grad_tol = {:.3e} within {} iterations",
            opts.grad_tol, opts.max_iters
        );
        Ok(EXIT_NO_CONVERGENCE)
    }
}

/// Shooting summary without the full trajectory (that goes to CSV).
#[derive(Serialize)]
struct OracleSummary {
    v0: Vec<f64>,
    residual: f64,
    iterations: usize,
    multiple_shooting: bool,
    steps: usize,
    audit: OdeAudit,
}

/// Chord seed: the straight-line velocity in the chart.
fn chord_seed(bd: &BoundaryData) -> Vec<f64> {
    let mut v: Vec<f64> = bd
        .x_q
        .iter()
        .zip(&bd.x_p)
        .map(|(q, p)| q - p)
        .collect();
    v.push(bd.delta_y());
    v.push(bd.delta_t());
    v
}

/// Largest CSV-friendly sample count: the solver grid when it divides the
/// step count, otherwise every RK4 node.
fn csv_samples(steps: usize, n: usize) -> usize {
    if n >= 2 && steps.is_multiple_of(n) {
        n
    } else {
        steps
    }
}

fn cmd_oracle(args: &RunArgs) -> Result<i32> {
    let run = load(args)?;
    let bd = boundary_of(&run.cfg)?;
    let opts = run.cfg.oracle.to_options()?;
    let report = oracle::shoot(&run.st, &bd, &chord_seed(&bd), &opts)?;
    let audit = oracle::audit(&run.st, &report.trajectory, opts.mode)?;
    let (curve, y, t) = oracle::sample(
        &run.st,
        &report.trajectory,
        csv_samples(opts.steps, run.cfg.solver.n),
    )?;
    let comments = csv_comments(&run.hash, "oracle", run.cfg.solver.seed);
    write_curve_csv(
        &run.out_dir.join("oracle_trajectory.csv"),
        &curve,
        &y,
        &t,
        &comments,
    )?;
    let summary = OracleSummary {
        v0: report.v0.clone(),
        residual: report.residual,
        iterations: report.iterations,
        multiple_shooting: report.multiple_shooting,
        steps: opts.steps,
        audit,
    };
    write_json(&run.out_dir.join("shoot_report.json"), &summary)?;
    eprintln!(
        "oracle: residual {:.3e} after {} Newton iterations{}; momentum drift ({:.3e}, {:.3e}), energy drift {:.3e}",
        summary.residual,
        summary.iterations,
        if summary.multiple_shooting {
            " (multiple shooting)"
        } else {
            ""
        },
        summary.audit.momentum_drift_y,
        summary.audit.momentum_drift_t,
        summary.audit.energy_drift
    );
    eprintln!("oracle: outputs in {}", run.out_dir.display());
    Ok(EXIT_OK)
}

fn cmd_audit(args: &RunArgs) -> Result<i32> {
    let run = load(args)?;
    let section = run
        .cfg
        .audit
        .as_ref()
        .ok_or_else(|| Error::Config("the audit command needs an [audit] section".into()))?;
    let cfg = section.to_config()?;
    let report = run_audit(&run.st, &cfg)?;
    write_json(&run.out_dir.join("audit_report.json"), &report)?;
    eprintln!("audit: {} points, {} paths", cfg.point_samples, cfg.path_samples);
    for v in &report.verdicts {
        let evidence = v.evidence.first().map(String::as_str).unwrap_or("");
        eprintln!("  {:<12} {:<13} {evidence}", v.claim.to_string(), v.status.to_string());
    }
    eprintln!("audit: full report in {}", run.out_dir.display());
    Ok(EXIT_OK)
}

/// Cross-validation summary of one variational/shooting pair.
#[derive(Serialize)]
struct CompareReport {
    n: usize,
    steps: usize,
    converged: bool,
    j: f64,
    grad_norm: f64,
    closure_y: f64,
    closure_t: f64,
    shoot_residual: f64,
    shoot_iterations: usize,
    multiple_shooting: bool,
    sup_distance: f64,
    audit: OdeAudit,
    warnings: Vec<String>,
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(mut a: usize, mut b: usize) -> usize {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    a / gcd(a, b) * b
}

fn cmd_compare(args: &RunArgs) -> Result<i32> {
    let run = load(args)?;
    let bd = boundary_of(&run.cfg)?;
    let solve_opts = run.cfg.solver.to_options();
    let mut shoot_opts = run.cfg.oracle.to_options()?;
    let mut warnings = Vec::new();
    // The sup distance compares the two curves on the coarse grid, so the
    // step count must be a multiple of n (and of 4 for the fallback).
    let quantum = lcm(solve_opts.n, 4);
    if shoot_opts.steps % quantum != 0 {
        let adjusted = shoot_opts.steps.div_ceil(quantum) * quantum;
        warnings.push(format!(
            "oracle.steps raised from {} to {adjusted} to align with n = {}",
            shoot_opts.steps, solve_opts.n
        ));
        shoot_opts.steps = adjusted;
    }
    if solve_opts.n < 50 {
        warnings.push(format!(
            "n = {} is coarse; the reported distance mostly measures discretization error",
            solve_opts.n
        ));
    }
    let var = solve(&run.st, &bd, &solve_opts)?;
    let seed_v0 = oracle::velocity_seed(&var.path, &var.reconstruction.y, &var.reconstruction.t);
    let shot = oracle::shoot(&run.st, &bd, &seed_v0, &shoot_opts)?;
    let audit = oracle::audit(&run.st, &shot.trajectory, shoot_opts.mode)?;
    let sup = oracle::sup_distance(
        &var.path,
        &var.reconstruction.y,
        &var.reconstruction.t,
        &shot.trajectory,
    )?;
    let comments = csv_comments(&run.hash, "compare", solve_opts.seed);
    write_curve_csv(
        &run.out_dir.join("geodesic.csv"),
        &var.path,
        &var.reconstruction.y,
        &var.reconstruction.t,
        &comments,
    )?;
    let (ocurve, oy, ot) = oracle::sample(&run.st, &shot.trajectory, solve_opts.n)?;
    write_curve_csv(
        &run.out_dir.join("oracle_trajectory.csv"),
        &ocurve,
        &oy,
        &ot,
        &comments,
    )?;
    warnings.extend(var.warnings.iter().cloned());
    let report = CompareReport {
        n: solve_opts.n,
        steps: shoot_opts.steps,
        converged: var.converged,
        j: var.state.j,
        grad_norm: var.grad_norm,
        closure_y: var.reconstruction.closure_y,
        closure_t: var.reconstruction.closure_t,
        shoot_residual: shot.residual,
        shoot_iterations: shot.iterations,
        multiple_shooting: shot.multiple_shooting,
        sup_distance: sup,
        audit,
        warnings,
    };
    write_json(&run.out_dir.join("compare_report.json"), &report)?;
    eprintln!(
        "compare: J = {:.12e}, shooting residual {:.3e}, sup distance {:.6e}",
        report.j, report.shoot_residual, report.sup_distance
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("compare: outputs in {}", run.out_dir.display());
    if report.converged {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_NO_CONVERGENCE)
    }
}
