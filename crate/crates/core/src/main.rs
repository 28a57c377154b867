//! Command-line front end for the experiment drivers.
//!
//! A flat `key=value` config file can preload any long flag; values given
//! on the command line win.

use clap::{Args, Parser, Subcommand, ValueEnum};
use cdropt::assembly::ObservationRegion;
use cdropt::minres::SolverConfig;
use cdropt::problems::ModelProblem;
use cdropt::studies::{self, PrecondKind, SmootherSpec, SweepFamily};
use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cdropt",
    version,
    about = "Preconditioned MINRES experiments for spline-discretized CDR optimal control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Iteration-count table over a parameter sweep
    Table(TableArgs),
    /// 1D convection-dominated comparison: forward Galerkin vs controlled state
    Canonical1d(CanonicalArgs),
    /// Manufactured-solution convergence rates in the natural norms
    Rates(RatesArgs),
    /// Convergence rates of the second-order orthogonal projector
    Projrates(LevelSweepArgs),
    /// Low-regularity projection error bound check
    Lowreg(LevelSweepArgs),
    /// Diagnostics: Schur defect, condition estimate, embedding constant
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Model problem: mp1..mp4
    #[arg(long)]
    problem: Option<String>,
    /// Spline degree
    #[arg(long)]
    p: Option<usize>,
    /// Dyadic refinement level
    #[arg(long)]
    level: Option<usize>,
    /// Diffusion coefficient
    #[arg(long)]
    eps: Option<f64>,
    /// Regularization parameter
    #[arg(long)]
    alpha: Option<f64>,
    /// Reaction coefficient override
    #[arg(long)]
    sigma: Option<f64>,
    /// Preconditioner realization
    #[arg(long, value_enum)]
    precond: Option<PrecondArg>,
    /// Multigrid smoother
    #[arg(long, value_enum)]
    smoother: Option<SmootherArg>,
    /// Smoothing steps per half-cycle
    #[arg(long)]
    nu: Option<usize>,
    /// Macro-smoother patch size (defaults to the degree)
    #[arg(long)]
    patch_a: Option<usize>,
    /// Macro-smoother patch overlap (defaults to degree - 1)
    #[arg(long)]
    patch_b: Option<usize>,
    /// Seed for the random initial guess
    #[arg(long)]
    seed: Option<u64>,
    /// Relative residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap (reported as-is for non-converged cells)
    #[arg(long)]
    maxit: Option<usize>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PrecondArg {
    Exact,
    Mg,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SmootherArg {
    Gs,
    MacroGs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    EpsAlpha,
    LevelAlpha,
    LevelDegree,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    common: Common,
    /// Which table layout to sweep
    #[arg(long, value_enum, default_value = "eps-alpha")]
    family: FamilyArg,
}

#[derive(Args)]
struct CanonicalArgs {
    #[command(flatten)]
    common: Common,
    /// Observation interval lower bound
    #[arg(long, default_value_t = 0.0)]
    obs_lo: f64,
    /// Observation interval upper bound
    #[arg(long, default_value_t = 1.0)]
    obs_hi: f64,
    /// Number of curve sample intervals
    #[arg(long, default_value_t = 512)]
    samples: usize,
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated refinement levels
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6")]
    levels: Vec<usize>,
}

#[derive(Args)]
struct LevelSweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated refinement levels
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6")]
    levels: Vec<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
}

/// Fully resolved run parameters after merging defaults, config file and
/// command-line flags.
struct Settings {
    problem: String,
    p: usize,
    level: usize,
    eps: f64,
    alpha: f64,
    sigma: Option<f64>,
    precond: PrecondArg,
    smoother: SmootherArg,
    nu: Option<usize>,
    patch_a: Option<usize>,
    patch_b: Option<usize>,
    seed: u64,
    tol: f64,
    maxit: usize,
    out: Option<PathBuf>,
}

fn parse_config(path: &PathBuf) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn resolve(common: &Common) -> Result<Settings, String> {
    let cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => HashMap::new(),
    };
    fn pick<T: std::str::FromStr>(
        flag: &Option<T>,
        cfg: &HashMap<String, String>,
        key: &str,
        default: T,
    ) -> Result<T, String>
    where
        T: Clone,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match cfg.get(key) {
            Some(s) => s.parse().map_err(|e| format!("config key {key}: {e}")),
            None => Ok(default),
        }
    }
    fn pick_opt<T: std::str::FromStr>(
        flag: &Option<T>,
        cfg: &HashMap<String, String>,
        key: &str,
    ) -> Result<Option<T>, String>
    where
        T: Clone,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag.clone());
        }
        match cfg.get(key) {
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| format!("config key {key}: {e}")),
            None => Ok(None),
        }
    }
    let precond = match &common.precond {
        Some(v) => *v,
        None => match cfg.get("precond").map(String::as_str) {
            Some("exact") | None => PrecondArg::Exact,
            Some("mg") => PrecondArg::Mg,
            Some(other) => return Err(format!("config key precond: unknown value {other:?}")),
        },
    };
    let smoother = match &common.smoother {
        Some(v) => *v,
        None => match cfg.get("smoother").map(String::as_str) {
            Some("gs") | None => SmootherArg::Gs,
            Some("macro-gs") => SmootherArg::MacroGs,
            Some(other) => return Err(format!("config key smoother: unknown value {other:?}")),
        },
    };
    Ok(Settings {
        problem: pick(&common.problem, &cfg, "problem", "mp1".to_string())?,
        p: pick(&common.p, &cfg, "p", 2)?,
        level: pick(&common.level, &cfg, "level", 6)?,
        eps: pick(&common.eps, &cfg, "eps", 1e-3)?,
        alpha: pick(&common.alpha, &cfg, "alpha", 1e-3)?,
        sigma: pick_opt(&common.sigma, &cfg, "sigma")?,
        precond,
        smoother,
        nu: pick_opt(&common.nu, &cfg, "nu")?,
        patch_a: pick_opt(&common.patch_a, &cfg, "patch-a")?,
        patch_b: pick_opt(&common.patch_b, &cfg, "patch-b")?,
        seed: pick(&common.seed, &cfg, "seed", 42)?,
        tol: pick(&common.tol, &cfg, "tol", 1e-8)?,
        maxit: pick(&common.maxit, &cfg, "maxit", 1000)?,
        out: pick_opt(&common.out, &cfg, "out")?,
    })
}

impl Settings {
    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iters: self.maxit,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }

    fn model_problem(&self) -> Result<ModelProblem, String> {
        let mut mp = ModelProblem::by_name(&self.problem)
            .ok_or_else(|| format!("unknown problem {:?} (expected mp1..mp4)", self.problem))?;
        if let Some(sigma) = self.sigma {
            mp.sigma = sigma;
        }
        Ok(mp)
    }

    fn smoother_spec(&self) -> SmootherSpec {
        match self.smoother {
            SmootherArg::Gs => SmootherSpec::GaussSeidel {
                nu: self.nu.unwrap_or(2),
            },
            SmootherArg::MacroGs => SmootherSpec::MacroGaussSeidel {
                nu: self.nu.unwrap_or(1),
                a: self.patch_a,
                b: self.patch_b,
            },
        }
    }

    fn precond_kind(&self) -> PrecondKind {
        match self.precond {
            PrecondArg::Exact => PrecondKind::Exact,
            PrecondArg::Mg => PrecondKind::Multigrid {
                smoother: self.smoother_spec(),
            },
        }
    }

    fn emit(&self, text: &str) -> Result<(), String> {
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| format!("cannot write {}: {e}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Table(args) => {
            let s = resolve(&args.common)?;
            let mp = s.model_problem()?;
            let family = match args.family {
                FamilyArg::EpsAlpha => SweepFamily::default_eps_alpha(s.p, s.level),
                FamilyArg::LevelAlpha => SweepFamily::default_level_alpha(s.p, s.eps),
                FamilyArg::LevelDegree => SweepFamily::default_level_degree(s.eps, s.alpha),
            };
            let table = studies::run_table(&mp, &family, &s.precond_kind(), &s.solver_config())
                .map_err(|e| e.to_string())?;
            s.emit(&table.to_csv())
        }
        Cmd::Canonical1d(args) => {
            let s = resolve(&args.common)?;
            let region = if args.obs_lo <= 0.0 && args.obs_hi >= 1.0 {
                ObservationRegion::Full
            } else {
                ObservationRegion::param_box([args.obs_lo, 0.0], [args.obs_hi, 1.0])
            };
            let r = studies::run_canonical_1d(
                s.p,
                s.level,
                s.eps,
                s.alpha,
                region,
                args.samples,
                &s.solver_config(),
            )
            .map_err(|e| e.to_string())?;
            eprintln!(
                "iterations {}  forward overshoot {:.4}  state overshoot {:.4}  |q| {:.4e}  |w| {:.4e}",
                r.iterations, r.forward_overshoot, r.state_overshoot, r.q_l2, r.w_l2
            );
            s.emit(&r.to_csv())
        }
        Cmd::Rates(args) => {
            let s = resolve(&args.common)?;
            let rows = studies::run_rate_study(s.p, &args.levels, s.eps, s.alpha, &s.solver_config())
                .map_err(|e| e.to_string())?;
            s.emit(&studies::rate_rows_to_csv(&rows))
        }
        Cmd::Projrates(args) => {
            let s = resolve(&args.common)?;
            let rows =
                studies::run_projection_rates(s.p, &args.levels).map_err(|e| e.to_string())?;
            s.emit(&studies::proj_rows_to_csv(&rows))
        }
        Cmd::Lowreg(args) => {
            let s = resolve(&args.common)?;
            let rows =
                studies::run_lowreg_projection_bound(s.p, &args.levels).map_err(|e| e.to_string())?;
            s.emit(&studies::lowreg_rows_to_csv(&rows))
        }
        Cmd::Verify(args) => {
            let s = resolve(&args.common)?;
            let mp = s.model_problem()?;
            let r = studies::run_verify(&mp, s.p, s.level, s.eps, s.alpha, s.seed)
                .map_err(|e| e.to_string())?;
            let text = format!(
                "problem {} p {} level {} eps {:e} alpha {:e}\n\
                 schur defect      {:.6e}\n\
                 |lambda| range    [{:.6e}, {:.6e}]\n\
                 condition         {:.6}\n\
                 embedding const   {:.6}\n",
                mp.name,
                s.p,
                s.level,
                s.eps,
                s.alpha,
                r.schur_defect,
                r.lambda_min_abs,
                r.lambda_max_abs,
                r.condition,
                r.second_constant
            );
            s.emit(&text)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
