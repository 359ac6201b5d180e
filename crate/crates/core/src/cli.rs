//! Command-line front end: instance ingestion, bound computation, comparison
//! sweeps, exact solves, certificate checks and random instance generation.
//!
//! Exit codes: 0 success, 2 parse/configuration error, 3 infeasible,
//! 4 solver failure, 5 certificate failure.

use crate::bnb::{search, BnbOptions, ScaleMode};
use crate::error::{GmespError, Result};
use crate::fact_bounds::{ddgfact_bound, optimize_upsilon_fact, FactOptions};
use crate::instance::{load_instance, MatrixData};
use crate::instance::{brute_force, random_instance, Instance, RelaxPoint};
use crate::linalg::{sym_eigen, Mat, Vector};
use crate::matrix_bounds::{
    certify, check_dual, optimize_gamma, optimize_upsilon_glinx, solve_relaxation, DualCheck, DualForm,
    MatrixDualPoint, ObjectiveData, RegionSpec, RelaxationKind, ScalingState, SolveOptions, CERT_TOL,
};
use crate::report::{BoundKind, BoundReport, ScalingUsed};
use crate::spectral::{lagrangian_spectral_bound, spectral_bound, DEFAULT_ITERS};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

/// Top-level arguments.
#[derive(Debug, Parser)]
#[command(name = "gmesp", version, about = "Certified bounds and branch-and-bound for constrained GMESP")]
pub struct Cli {
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one report per requested bound.
    Bound(BoundArgs),
    /// Gap table over a synthetic ensemble, one row per (s, t, bound).
    Sweep(SweepArgs),
    /// Exact branch-and-bound solve.
    Solve(SolveArgs),
    /// Check a dual point, or certify a primal point.
    Certify(CertifyArgs),
    /// Write a seeded random instance.
    Gen(GenArgs),
}

/// Output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// JSON document.
    Json,
    /// CSV table.
    Csv,
}

/// Options shared by the bound-computing subcommands.
#[derive(Debug, Clone, Args)]
pub struct BoundOpts {
    /// Comma-separated bound list.
    #[arg(long, value_delimiter = ',', default_value = "glinx")]
    pub bound: Vec<String>,
    /// Region of the matrix relaxations: full, no-soc, identity-cap.
    #[arg(long, default_value = "no-soc")]
    pub region: String,
    /// Scaling: none, o, g.
    #[arg(long, default_value = "none")]
    pub scale: String,
    /// Fixed scalar factor for o-scaling (a number, or `spectral` for 1/λ_t²);
    /// omitted: optimized. Implies `--scale o` when the scale is `none`.
    #[arg(long)]
    pub gamma: Option<String>,
    /// Final barrier weight of the inner solvers.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Price side constraints by an exact LP in the certificates.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub dual_lp: bool,
}

/// `bound` arguments.
#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    /// Instance file (JSON).
    #[arg(long)]
    pub instance: PathBuf,
    /// Bound options.
    #[command(flatten)]
    pub opts: BoundOpts,
    /// Lower bound for the gap column: a number or `heuristic`.
    #[arg(long)]
    pub lb: Option<String>,
    /// Seed of the heuristic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Compare every bound against brute-force enumeration.
    #[arg(long)]
    pub oracle_check: bool,
}

/// `sweep` arguments.
#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Order of the synthetic covariances (ignored with `--instance`).
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Ensemble size per (s, t).
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Values of κ = s − t.
    #[arg(long, value_delimiter = ',', default_value = "0,1,4")]
    pub kappa: Vec<usize>,
    /// Values of s.
    #[arg(long = "s-values", value_delimiter = ',', default_value = "6,10")]
    pub s_values: Vec<usize>,
    /// Use this instance's covariance instead of the synthetic ensemble.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Bound options.
    #[command(flatten)]
    pub opts: BoundOpts,
    /// Base seed of the ensemble.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

/// `solve` arguments.
#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Instance file (JSON).
    #[arg(long)]
    pub instance: PathBuf,
    /// Bound used at the nodes (one kind).
    #[arg(long, default_value = "glinx")]
    pub bound: String,
    /// Region of the matrix relaxations.
    #[arg(long, default_value = "no-soc")]
    pub region: String,
    /// Scaling: none, o, g.
    #[arg(long, default_value = "o")]
    pub scale: String,
    /// Optimality tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Node budget.
    #[arg(long, default_value_t = 10_000)]
    pub max_nodes: usize,
    /// Seed of the heuristic restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Price side constraints by an exact LP in the certificates.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub dual_lp: bool,
    /// Compare with brute-force enumeration and print MATCH / MISMATCH.
    #[arg(long)]
    pub oracle_check: bool,
    /// Print the node log to stderr.
    #[arg(long, short)]
    pub verbose: bool,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// `certify` arguments.
#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    /// Instance file (JSON).
    #[arg(long)]
    pub instance: PathBuf,
    /// Point file: a dual point (`dual`) or a primal point (`x`, `X`).
    #[arg(long)]
    pub point: PathBuf,
    /// Relaxation (overrides the file's `kind`).
    #[arg(long)]
    pub bound: Option<String>,
    /// Region used when certifying a primal point.
    #[arg(long, default_value = "no-soc")]
    pub region: String,
    /// Residual tolerance.
    #[arg(long, default_value_t = CERT_TOL)]
    pub tol: f64,
    /// Price side constraints by an exact LP when certifying a primal point.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub dual_lp: bool,
    /// Compare the certified value with brute-force enumeration.
    #[arg(long)]
    pub oracle_check: bool,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `gen` arguments.
#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Order of `C`.
    #[arg(long)]
    pub n: usize,
    /// Selection size.
    #[arg(long)]
    pub s: usize,
    /// Eigenvalue count.
    #[arg(long)]
    pub t: usize,
    /// Number of random side constraints.
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    /// Seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Rule for the scalar factor under o-scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// Search for the best factor.
    Optimized,
    /// `1/λ_t(C)²`.
    Spectral,
    /// A fixed value.
    Fixed(f64),
}

/// Validated configuration of a bound computation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Requested bounds (at least one).
    pub bounds: Vec<BoundKind>,
    /// Region of the matrix relaxations.
    pub region: RegionSpec,
    /// Scaling mode.
    pub scale: ScaleMode,
    /// Scalar-factor rule under o-scaling.
    pub gamma: GammaRule,
    /// Final barrier weight (positive).
    pub tol: f64,
    /// Exact LP pricing in certificates.
    pub dual_lp: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bounds: vec![BoundKind::Glinx],
            region: RegionSpec::default(),
            scale: ScaleMode::None,
            gamma: GammaRule::Optimized,
            tol: 1e-9,
            dual_lp: true,
        }
    }
}

fn config_err(msg: impl Into<String>) -> GmespError {
    GmespError::Parse(msg.into())
}

fn parse_kind(s: &str) -> Result<BoundKind> {
    BoundKind::parse(s.trim()).ok_or_else(|| config_err(format!("unknown bound '{s}'")))
}

fn parse_region(s: &str) -> Result<RegionSpec> {
    RegionSpec::parse(s).ok_or_else(|| config_err(format!("unknown region '{s}'")))
}

fn parse_scale(s: &str) -> Result<ScaleMode> {
    ScaleMode::parse(s).ok_or_else(|| config_err(format!("unknown scaling '{s}' (none, o, g)")))
}

impl RunConfig {
    /// Builds and validates a configuration from command-line options.
    pub fn from_opts(o: &BoundOpts) -> Result<Self> {
        let bounds = o.bound.iter().filter(|b| !b.trim().is_empty()).map(|b| parse_kind(b)).collect::<Result<Vec<_>>>()?;
        let gamma = match o.gamma.as_deref() {
            None => GammaRule::Optimized,
            Some("spectral") => GammaRule::Spectral,
            Some(v) => GammaRule::Fixed(v.parse().map_err(|_| config_err(format!("bad --gamma '{v}'")))?),
        };
        let cfg = RunConfig {
            bounds,
            region: parse_region(&o.region)?,
            // an explicit γ only makes sense with o-scaling
            scale: match parse_scale(&o.scale)? {
                ScaleMode::None if o.gamma.is_some() => ScaleMode::O,
                m => m,
            },
            gamma,
            tol: o.tol,
            dual_lp: o.dual_lp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// At least one bound; positive tolerance and factor.
    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(config_err("no bound requested"));
        }
        if !(self.tol > 0.0) {
            return Err(config_err(format!("tolerance {} must be positive", self.tol)));
        }
        if let GammaRule::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(config_err(format!("γ = {g} must be positive")));
            }
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        let mut so = SolveOptions { dual_lp: self.dual_lp, ..SolveOptions::default() };
        so.path.mu_min = self.tol;
        so
    }

    fn fact_options(&self) -> FactOptions {
        let mut fo = FactOptions { dual_lp: self.dual_lp, ..FactOptions::default() };
        fo.path.mu_min = self.tol;
        fo
    }
}

/// Computes one bound under a configuration. Scaling is applied where the
/// family supports it (o and g for glinx, g for DDGFact); the report states
/// the scaling actually used.
pub fn compute_bound(inst: &Instance, kind: BoundKind, cfg: &RunConfig) -> Result<BoundReport> {
    let start = Instant::now();
    let closed = |value: f64, iterations: usize, notes: Vec<String>| BoundReport {
        kind,
        region: None,
        scaling: ScalingUsed::none(),
        primal: value,
        certified: Some(value),
        gap: None,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        converged: true,
        diagnostics: notes,
    };
    let mut report = match kind {
        BoundKind::Spectral => closed(spectral_bound(&inst.cov, inst.t)?, 1, vec![]),
        BoundKind::LagrangianSpectral => {
            let r = lagrangian_spectral_bound(inst, None, DEFAULT_ITERS)?;
            closed(r.value, r.evaluations, vec![format!("pi={:?}", r.pi)])
        }
        BoundKind::Ddgfact => {
            let fo = cfg.fact_options();
            if cfg.scale == ScaleMode::G {
                let r = optimize_upsilon_fact(inst, &Vector::from_element(inst.n(), 1.0), 30, &fo)?;
                let mut rep = r.solution.report;
                rep.iterations = r.history.len();
                rep
            } else {
                ddgfact_bound(inst, &fo)?.report
            }
        }
        BoundKind::Glinx => {
            let so = cfg.solve_options();
            let fixed_gamma = |rule: GammaRule| -> Result<Option<f64>> {
                Ok(match rule {
                    GammaRule::Optimized => None,
                    GammaRule::Fixed(g) => Some(g),
                    GammaRule::Spectral => {
                        let lt = sym_eigen(&inst.cov)?.values[inst.t - 1];
                        Some(1.0 / (lt * lt))
                    }
                })
            };
            match cfg.scale {
                ScaleMode::None => {
                    solve_relaxation(inst, RelaxationKind::Glinx, &cfg.region, &ScalingState::default(), &so)?.report
                }
                ScaleMode::O => match fixed_gamma(cfg.gamma)? {
                    Some(g) => solve_relaxation(inst, RelaxationKind::Glinx, &cfg.region, &ScalingState::o(g), &so)?.report,
                    None => {
                        let g = optimize_gamma(inst, &cfg.region, &so, 20)?;
                        let mut rep = g.solution.report;
                        rep.iterations = g.history.len();
                        rep
                    }
                },
                ScaleMode::G => {
                    let g0 = match fixed_gamma(cfg.gamma)? {
                        Some(g) => g,
                        None => optimize_gamma(inst, &cfg.region, &so, 20)?.gamma,
                    };
                    let u = optimize_upsilon_glinx(inst, &cfg.region, &so, g0, 20)?;
                    let mut rep = u.solution.report;
                    rep.iterations = u.history.len();
                    rep
                }
            }
        }
        BoundKind::GnlpId | BoundKind::GnlpComp => {
            let rk = if kind == BoundKind::GnlpId { RelaxationKind::GnlpId } else { RelaxationKind::GnlpComp };
            solve_relaxation(inst, rk, &cfg.region, &ScalingState::default(), &cfg.solve_options())?.report
        }
    };
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Exit code of an error.
pub fn exit_code(e: &GmespError) -> i32 {
    match e {
        GmespError::Parse(_) | GmespError::InvariantViolation(_) => 2,
        GmespError::Infeasible(_) | GmespError::RankDeficient(_) => 3,
        GmespError::CertificateFailure(_) => 5,
        _ => 4,
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// CSV header of bound reports.
pub const BOUND_CSV_HEADER: [&str; 10] =
    ["kind", "region", "scaling", "gamma", "primal", "certified", "gap", "iterations", "wall_time", "converged"];

/// Renders bound reports as JSON or CSV.
pub fn render_reports(reports: &[BoundReport], format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(reports).expect("serializable") + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| GmespError::Internal(e.to_string());
            w.write_record(BOUND_CSV_HEADER).map_err(io)?;
            for r in reports {
                w.write_record([
                    r.kind.name().to_string(),
                    r.region.clone().unwrap_or_default(),
                    r.scaling.mode.clone(),
                    fmt_opt(r.scaling.gamma),
                    fmt_f(r.primal),
                    fmt_opt(r.certified),
                    fmt_opt(r.gap),
                    r.iterations.to_string(),
                    fmt_f(r.wall_time),
                    r.converged.to_string(),
                ])
                .map_err(io)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| GmespError::Internal(e.to_string()))?)
                .map_err(|e| GmespError::Internal(e.to_string()))
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| GmespError::Parse(format!("{}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| GmespError::Internal(e.to_string()))
        }
    }
}

fn resolve_lb(inst: &Instance, lb: &Option<String>, seed: u64) -> Result<Option<f64>> {
    match lb.as_deref() {
        None => Ok(None),
        Some("heuristic") => Ok(Some(crate::bnb::heuristic_lb(inst, 3, seed)?.value)),
        Some(v) => v.parse().map(Some).map_err(|_| config_err(format!("bad --lb '{v}'"))),
    }
}

/// `bound` subcommand.
pub fn cmd_bound(args: &BoundArgs) -> Result<Vec<BoundReport>> {
    let cfg = RunConfig::from_opts(&args.opts)?;
    let inst = load_instance(&args.instance)?;
    let lb = resolve_lb(&inst, &args.lb, args.seed)?;
    let reports = cfg
        .bounds
        .iter()
        .map(|&k| compute_bound(&inst, k, &cfg).map(|r| r.with_lb(lb)))
        .collect::<Result<Vec<_>>>()?;
    emit(&args.out, &render_reports(&reports, args.format)?)?;
    if args.oracle_check {
        let opt = brute_force(&inst)?.value;
        for r in &reports {
            let ok = r.bound() >= opt - 1e-8;
            eprintln!("{} {} oracle={opt} {}", r.kind, r.bound(), if ok { "VALID" } else { "VIOLATED" });
            if !ok {
                return Err(GmespError::Internal(format!("{} bound {} below optimum {opt}", r.kind, r.bound())));
            }
        }
    }
    Ok(reports)
}

/// One row of a sweep table (means over the ensemble).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    /// Selection size.
    pub s: usize,
    /// Eigenvalue count.
    pub t: usize,
    /// Bound family.
    pub kind: String,
    /// Mean bound.
    pub bound: f64,
    /// Mean heuristic lower bound.
    pub lb: f64,
    /// Mean gap.
    pub gap: f64,
    /// Mean wall time in seconds.
    pub time: f64,
    /// Ensemble size.
    pub count: usize,
}

/// CSV header of sweep rows.
pub const SWEEP_CSV_HEADER: [&str; 8] = ["s", "t", "kind", "bound", "lb", "gap", "time", "count"];

/// Gap table over an ensemble: for every `s` and `κ < s`, `t = s − κ`, every
/// bound kind and `count` instances. Rows are computed in the worker pool and
/// sorted by `(s, t, kind)`.
pub fn sweep(
    base: &[Mat],
    s_values: &[usize],
    kappa: &[usize],
    cfg: &RunConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut cells = Vec::new();
    for &s in s_values {
        for &k in kappa {
            if k >= s {
                continue;
            }
            for (i, c) in base.iter().enumerate() {
                if s >= c.nrows() {
                    return Err(config_err(format!("s = {s} must be below n = {}", c.nrows())));
                }
                cells.push((s, s - k, i));
            }
        }
    }
    // LBs once per (s, t, instance), then bounds per kind
    let lbs: Vec<f64> = cells
        .par_iter()
        .map(|&(s, t, i)| {
            let inst = Instance::new(base[i].clone(), s, t)?;
            Ok(crate::bnb::heuristic_lb(&inst, 3, seed)?.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, BoundKind)> =
        (0..cells.len()).flat_map(|c| cfg.bounds.iter().map(move |&k| (c, k))).collect();
    let results: Vec<(usize, BoundKind, f64, f64)> = jobs
        .par_iter()
        .map(|&(c, kind)| {
            let (s, t, i) = cells[c];
            let inst = Instance::new(base[i].clone(), s, t)?;
            let r = compute_bound(&inst, kind, cfg)?;
            Ok((c, kind, r.bound(), r.wall_time))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<SweepRow> = Vec::new();
    let kind_rank = |k: BoundKind| BoundKind::ALL.iter().position(|&x| x == k).expect("known kind");
    let mut keys: Vec<(usize, usize, BoundKind)> = results.iter().map(|&(c, k, _, _)| (cells[c].0, cells[c].1, k)).collect();
    keys.sort_by_key(|&(s, t, k)| (s, t, kind_rank(k)));
    keys.dedup();
    for (s, t, kind) in keys {
        let sel: Vec<&(usize, BoundKind, f64, f64)> =
            results.iter().filter(|r| r.1 == kind && cells[r.0].0 == s && cells[r.0].1 == t).collect();
        let cnt = sel.len() as f64;
        let bound = sel.iter().map(|r| r.2).sum::<f64>() / cnt;
        let lb = sel.iter().map(|r| lbs[r.0]).sum::<f64>() / cnt;
        let time = sel.iter().map(|r| r.3).sum::<f64>() / cnt;
        rows.push(SweepRow { s, t, kind: kind.name().into(), bound, lb, gap: bound - lb, time, count: sel.len() });
    }
    Ok(rows)
}

/// Renders sweep rows.
pub fn render_sweep(rows: &[SweepRow], format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows).expect("serializable") + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| GmespError::Internal(e.to_string());
            w.write_record(SWEEP_CSV_HEADER).map_err(io)?;
            for r in rows {
                w.write_record([
                    r.s.to_string(),
                    r.t.to_string(),
                    r.kind.clone(),
                    fmt_f(r.bound),
                    fmt_f(r.lb),
                    fmt_f(r.gap),
                    fmt_f(r.time),
                    r.count.to_string(),
                ])
                .map_err(io)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| GmespError::Internal(e.to_string()))?)
                .map_err(|e| GmespError::Internal(e.to_string()))
        }
    }
}

/// `sweep` subcommand.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let cfg = RunConfig::from_opts(&args.opts)?;
    let base: Vec<Mat> = match &args.instance {
        Some(p) => vec![load_instance(p)?.cov],
        None => (0..args.count as u64)
            .map(|i| crate::instance::random_covariance(args.n, args.seed.wrapping_add(i)))
            .collect(),
    };
    let rows = sweep(&base, &args.s_values, &args.kappa, &cfg, args.seed)?;
    emit(&args.out, &render_sweep(&rows, args.format)?)?;
    Ok(rows)
}

/// Result of the `solve` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// Selected indices (0-based).
    pub support: Option<Vec<usize>>,
    /// Objective value.
    pub value: Option<f64>,
    /// Whether optimality was proven.
    pub optimal: bool,
    /// Certified global upper bound.
    pub bound: f64,
    /// Nodes evaluated.
    pub nodes: usize,
    /// Duality-gap fixings.
    pub fixings: usize,
    /// Deepest node.
    pub max_depth: usize,
    /// Wall time in seconds.
    pub wall_time: f64,
    /// Brute-force comparison, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
}

/// `solve` subcommand. A budget-exhausted search still writes its partial
/// report before failing.
pub fn cmd_solve(args: &SolveArgs) -> Result<SolveReport> {
    let inst = load_instance(&args.instance)?;
    let opts = BnbOptions {
        kind: parse_kind(&args.bound)?,
        region: parse_region(&args.region)?,
        scale: parse_scale(&args.scale)?,
        max_nodes: args.max_nodes,
        tol: args.tol,
        dual_lp: args.dual_lp,
        seed: args.seed,
        ..BnbOptions::default()
    };
    if !(opts.tol > 0.0) {
        return Err(config_err("tolerance must be positive"));
    }
    let out = search(&inst, &opts)?;
    if args.verbose {
        for line in &out.stats.log {
            eprintln!("{line}");
        }
    }
    let mut rep = SolveReport {
        support: out.stats.support.clone(),
        value: out.stats.incumbent,
        optimal: out.stats.optimal,
        bound: out.stats.bound,
        nodes: out.stats.nodes,
        fixings: out.stats.fixings,
        max_depth: out.stats.max_depth,
        wall_time: out.stats.wall_time,
        oracle: None,
    };
    if args.oracle_check {
        let ok = match (brute_force(&inst), rep.value) {
            (Ok(b), Some(v)) => (b.value - v).abs() <= 1e-9 * (1.0 + v.abs()),
            (Err(GmespError::Infeasible(_)), None) => true,
            _ => false,
        };
        let verdict = if ok { "MATCH" } else { "MISMATCH" };
        eprintln!("{verdict}");
        rep.oracle = Some(verdict.into());
    }
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&rep).expect("serializable") + "\n",
        Format::Csv => format!(
            "support,value,optimal,bound,nodes,fixings,max_depth,wall_time\n\"{}\",{},{},{},{},{},{},{}\n",
            rep.support.as_ref().map(|s| s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")).unwrap_or_default(),
            fmt_opt(rep.value),
            rep.optimal,
            fmt_f(rep.bound),
            rep.nodes,
            rep.fixings,
            rep.max_depth,
            fmt_f(rep.wall_time)
        ),
    };
    emit(&args.out, &text)?;
    if rep.oracle.as_deref() == Some("MISMATCH") {
        return Err(GmespError::Internal("branch-and-bound disagrees with enumeration".into()));
    }
    match (rep.value, rep.optimal) {
        (_, false) => Err(GmespError::BudgetExhausted(format!("{} nodes, bound {}", rep.nodes, rep.bound))),
        (None, true) => Err(GmespError::Infeasible("no feasible selection of rank >= t".into())),
        _ => Ok(rep),
    }
}

/// Dual point as stored on disk (matrices flat row-major or as rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualFile {
    /// `diag-x` or `identity`.
    #[serde(default = "default_form")]
    pub form: String,
    /// `Θ`.
    pub theta: MatrixData,
    /// Multipliers of `x ≥ l`.
    pub upsilon: Vec<f64>,
    /// Multipliers of `x ≤ c`.
    pub nu: Vec<f64>,
    /// SOC multipliers.
    #[serde(default)]
    pub eta: Vec<f64>,
    /// Multipliers of `Ax ≤ b`.
    #[serde(default)]
    pub pi: Vec<f64>,
    /// Multiplier of `eᵀx = s`.
    pub tau: f64,
    /// Multiplier of `tr X = t`.
    pub xi: f64,
    /// `Z`.
    #[serde(rename = "Z")]
    pub z: MatrixData,
    /// `Ω` (zero if omitted).
    #[serde(rename = "Omega", default)]
    pub omega: Option<MatrixData>,
    /// `W` (zero if omitted).
    #[serde(rename = "W", default)]
    pub w: Option<MatrixData>,
}

fn default_form() -> String {
    "diag-x".into()
}

/// Point file of the `certify` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointFile {
    /// Relaxation family (`glinx`, `gnlp-id`, `gnlp-comp`).
    #[serde(default)]
    pub kind: Option<String>,
    /// Scalar factor of the glinx objective.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Dual point.
    #[serde(default)]
    pub dual: Option<DualFile>,
    /// Primal selection.
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    /// Primal matrix.
    #[serde(rename = "X", default)]
    pub xmat: Option<MatrixData>,
}

fn to_mat(d: &MatrixData, n: usize, name: &str) -> Result<Mat> {
    match d {
        MatrixData::Flat(v) if v.len() == n * n => Ok(Mat::from_row_slice(n, n, v)),
        MatrixData::Rows(r) if r.len() == n && r.iter().all(|row| row.len() == n) => {
            Ok(Mat::from_fn(n, n, |i, j| r[i][j]))
        }
        _ => Err(config_err(format!("{name} is not {n}x{n}"))),
    }
}

fn to_vec(v: &[f64], n: usize, name: &str) -> Result<Vector> {
    if v.is_empty() {
        return Ok(Vector::zeros(n));
    }
    if v.len() != n {
        return Err(config_err(format!("{name} has length {}, expected {n}", v.len())));
    }
    Ok(Vector::from_column_slice(v))
}

fn relaxation_kind(s: &str) -> Result<RelaxationKind> {
    match parse_kind(s)? {
        BoundKind::Glinx => Ok(RelaxationKind::Glinx),
        BoundKind::GnlpId => Ok(RelaxationKind::GnlpId),
        BoundKind::GnlpComp => Ok(RelaxationKind::GnlpComp),
        k => Err(config_err(format!("{k} has no matrix dual"))),
    }
}

impl DualFile {
    /// Builds the dual point for an instance.
    pub fn to_point(&self, inst: &Instance, kind: RelaxationKind) -> Result<MatrixDualPoint> {
        let n = inst.n();
        let form = match self.form.as_str() {
            "diag-x" => DualForm::DiagX,
            "identity" => DualForm::Identity,
            f => return Err(config_err(format!("unknown dual form '{f}'"))),
        };
        let zero = Mat::zeros(n, n);
        Ok(MatrixDualPoint {
            kind,
            form,
            theta: to_mat(&self.theta, n, "theta")?,
            upsilon: to_vec(&self.upsilon, n, "upsilon")?,
            nu: to_vec(&self.nu, n, "nu")?,
            eta: to_vec(&self.eta, n, "eta")?,
            pi: to_vec(&self.pi, inst.m(), "pi")?,
            tau: self.tau,
            xi: self.xi,
            z: to_mat(&self.z, n, "Z")?,
            omega: self.omega.as_ref().map(|m| to_mat(m, n, "Omega")).transpose()?.unwrap_or_else(|| zero.clone()),
            w: self.w.as_ref().map(|m| to_mat(m, n, "W")).transpose()?.unwrap_or(zero),
            objective: f64::NAN,
        })
    }
}

/// Report of the `certify` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    /// Relaxation family.
    pub kind: BoundKind,
    /// Residuals and cone checks.
    pub check: DualCheck,
    /// Certified upper bound (the recomputed dual objective).
    pub certified: f64,
    /// Whether every check passed.
    pub passed: bool,
}

/// Checks a dual point against an instance.
pub fn check_dual_file(inst: &Instance, file: &PointFile, kind: RelaxationKind, tol: f64) -> Result<CertifyReport> {
    let dual = file.dual.as_ref().ok_or_else(|| config_err("point file has no dual point"))?;
    let scaling = ScalingState::o(file.gamma.unwrap_or(1.0));
    let od = ObjectiveData::new(inst, kind, &scaling)?;
    let dp = dual.to_point(inst, kind)?;
    let check = check_dual(inst, &od, &dp, tol)?;
    let passed = check.passed();
    Ok(CertifyReport { kind: kind.bound_kind(), certified: check.objective, passed, check })
}

/// `certify` subcommand: exit 0 iff every residual is within tolerance.
pub fn cmd_certify(args: &CertifyArgs) -> Result<CertifyReport> {
    let inst = load_instance(&args.instance)?;
    let text = std::fs::read_to_string(&args.point)
        .map_err(|e| config_err(format!("{}: {e}", args.point.display())))?;
    let file: PointFile = serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))?;
    let kind = relaxation_kind(args.bound.as_deref().or(file.kind.as_deref()).unwrap_or("glinx"))?;
    let rep = if file.dual.is_some() {
        check_dual_file(&inst, &file, kind, args.tol)?
    } else {
        let n = inst.n();
        let x = to_vec(file.x.as_deref().ok_or_else(|| config_err("point file has neither dual nor x"))?, n, "x")?;
        let xmat = to_mat(file.xmat.as_ref().ok_or_else(|| config_err("primal point needs X"))?, n, "X")?;
        let scaling = ScalingState::o(file.gamma.unwrap_or(1.0));
        let region = parse_region(&args.region)?;
        let dp = certify(&inst, kind, &region, &scaling, &RelaxPoint { x, xmat }, None, args.dual_lp)?;
        let od = ObjectiveData::new(&inst, kind, &scaling)?;
        let check = check_dual(&inst, &od, &dp, args.tol)?;
        CertifyReport { kind: kind.bound_kind(), certified: check.objective, passed: check.passed(), check }
    };
    emit(&args.out, &(serde_json::to_string_pretty(&rep).expect("serializable") + "\n"))?;
    for v in &rep.check.violations {
        eprintln!("violated: {v}");
    }
    if args.oracle_check {
        let opt = brute_force(&inst)?.value;
        eprintln!("certified={} oracle={opt} {}", rep.certified, if rep.certified >= opt - 1e-8 { "VALID" } else { "VIOLATED" });
    }
    if !rep.passed {
        return Err(GmespError::CertificateFailure(rep.check.violations.join("; ")));
    }
    Ok(rep)
}

/// `gen` subcommand.
pub fn cmd_gen(args: &GenArgs) -> Result<Instance> {
    let inst = random_instance(args.n, args.s, args.t, args.m, args.seed)?;
    emit(&args.out, &(inst.to_json() + "\n"))?;
    Ok(inst)
}

/// Sizes the global worker pool from `GMESP_THREADS` (if set).
pub fn init_pool() {
    if let Some(n) = std::env::var("GMESP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second initialization (e.g. in tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    init_pool();
    let res = match &cli.command {
        Command::Bound(a) => cmd_bound(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
        Command::Solve(a) => cmd_solve(a).map(|_| ()),
        Command::Certify(a) => cmd_certify(a).map(|_| ()),
        Command::Gen(a) => cmd_gen(a).map(|_| ()),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` (including the program name) and runs; clap usage errors
/// map to exit code 2.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            }
        }
    }
}
