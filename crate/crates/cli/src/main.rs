//! Command-line front end: bounds, exact CME moments, SSA ensembles and
//! diagnostics for a reaction network in `.rxn` format.

mod config;

use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinbound::dynamics::build_moment_odes;
use kinbound::oracle::{ssa_simulate, suggested_rho, OracleError, DEFAULT_STATE_CAP};
use kinbound::trajectory::{
    attach_oracle, auto_rho, bound_trajectory, fmt_value, to_csv, to_json, truth_residuals,
    BoundError,
};
use kinbound::{
    parse_network, reduce, BoundOptions, BoundQuery, ClarabelBackend, Oracle, ReducedModel,
    RhoSpec, Scaling, Sense, SolverSettings, Statistic, Target,
};

use config::{parse_grid, FileConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_ORACLE_CAP: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILURE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::StateCapExceeded { .. } | OracleError::TooLargeForDense { .. } => {
                EXIT_ORACLE_CAP
            }
            OracleError::InvalidArgument(_) => EXIT_CONFIG,
        };
        Self { code, message: format!("oracle: {e}") }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::Oracle(o) => o.into(),
            other => Self::config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "kinbound", version, about = "Moment bounds for stochastic chemical kinetics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upper and lower bounds on means and variances over a time grid.
    Bound(BoundArgs),
    /// Exact means and variances from the truncated CME.
    Oracle(OracleArgs),
    /// Slowest generator eigenvalues and the suggested exponent set.
    Eigs(EigsArgs),
    /// Stochastic simulation ensemble statistics.
    Ssa(SsaArgs),
    /// Plugs exact moments into every constraint and reports violations.
    Check(CheckArgs),
    /// Dumps the moment equation matrices [A_L A_H].
    Odes(OdesArgs),
}

#[derive(Args)]
struct Common {
    /// Network file in .rxn format.
    network: Option<PathBuf>,
    /// TOML file with default values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Comma-separated species to keep as independent variables.
    #[arg(long, value_delimiter = ',')]
    independent: Option<Vec<String>>,
    /// Maximum number of reachable states the oracle may enumerate.
    #[arg(long)]
    state_cap: Option<usize>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: Common,
    /// Time grid as start:step:end or a comma list.
    #[arg(long)]
    grid: Option<String>,
    /// Statistics to bound, e.g. mean:A,var:A.
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<String>>,
    /// Exponent set as a comma list or auto:k.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    /// Highest tracked moment order.
    #[arg(long)]
    m: Option<u32>,
    /// Half-order of the moment matrix.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    feas: Option<f64>,
    #[arg(long)]
    iter_cap: Option<u32>,
    /// none, initial, fixed:<s> or sweep.
    #[arg(long)]
    scaling: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Add the exact statistic from the CME as an extra column.
    #[arg(long)]
    with_oracle: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct EigsArgs {
    #[command(flatten)]
    common: Common,
    /// Number of nonzero eigenvalues to report.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct SsaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    /// Largest tolerated equality or eigenvalue violation.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct OdesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    m: Option<u32>,
}

struct Context {
    file: FileConfig,
    reduced: ReducedModel,
    output: Option<PathBuf>,
    state_cap: usize,
}

impl Context {
    fn load(common: &Common) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let path = common
            .network
            .clone()
            .or_else(|| file.network.clone())
            .ok_or_else(|| CliError::config("no network file given"))?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let network = parse_network(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let independent = common.independent.clone().or_else(|| file.independent.clone());
        let choice = independent
            .map(|names| {
                names
                    .iter()
                    .map(|n| network.species_index(n.trim()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()
            .map_err(|e| CliError::config(e.to_string()))?;
        let reduced =
            reduce(&network, choice.as_deref()).map_err(|e| CliError::config(e.to_string()))?;
        let output = common.output.clone().or_else(|| file.output.clone());
        let state_cap = common.state_cap.or(file.state_cap).unwrap_or(DEFAULT_STATE_CAP);
        Ok(Self { file, reduced, output, state_cap })
    }

    fn grid(&self, flag: &Option<String>) -> Result<Vec<f64>, CliError> {
        let s = flag
            .clone()
            .or_else(|| self.file.grid.clone())
            .ok_or_else(|| CliError::config("no time grid given"))?;
        parse_grid(&s)
    }

    fn rho(&self, flag: &Option<String>) -> Result<Vec<f64>, CliError> {
        let spec = match flag.clone().or_else(|| self.file.rho.as_ref().map(|r| r.to_spec_string())) {
            Some(s) => s.parse::<RhoSpec>().map_err(|e| CliError::config(format!("rho: {e}")))?,
            None => return Ok(vec![0.0]),
        };
        match spec {
            RhoSpec::Explicit(v) => Ok(v),
            RhoSpec::Auto(k) => {
                let oracle = Oracle::new(&self.reduced, self.state_cap)?;
                Ok(auto_rho(&oracle, k)?)
            }
        }
    }

    fn oracle(&self) -> Result<Oracle, CliError> {
        Ok(Oracle::new(&self.reduced, self.state_cap)?)
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.output {
            Some(p) => std::fs::write(p, text)
                .map_err(|e| CliError::io(format!("cannot write {}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn cmd_bound(args: &BoundArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let file = &ctx.file;
    let grid = ctx.grid(&args.grid)?;
    let targets: Vec<Target> = args
        .target
        .clone()
        .or_else(|| file.targets.clone())
        .ok_or_else(|| CliError::config("no targets given"))?
        .iter()
        .map(|s| s.trim().parse().map_err(|e| CliError::config(format!("target: {e}"))))
        .collect::<Result<_, _>>()?;
    let scaling = match args.scaling.clone().or_else(|| file.scaling.clone()) {
        Some(s) => s.parse::<Scaling>().map_err(|e| CliError::config(format!("scaling: {e}")))?,
        None => Scaling::Initial,
    };
    let format = args.format.clone().or_else(|| file.format.clone()).unwrap_or_else(|| "csv".into());
    if format != "csv" && format != "json" {
        return Err(CliError::config(format!("unknown format '{format}'")));
    }
    let mut settings = SolverSettings::default();
    settings.tol.gap = args.gap.or(file.gap).unwrap_or(settings.tol.gap);
    settings.tol.feas = args.feas.or(file.feas).unwrap_or(settings.tol.feas);
    settings.iter_cap = args.iter_cap.or(file.iter_cap).unwrap_or(settings.iter_cap);
    if !(settings.tol.gap > 0.0 && settings.tol.feas > 0.0) || settings.iter_cap == 0 {
        return Err(CliError::config("tolerances and iteration cap must be positive"));
    }
    let opts = BoundOptions {
        m: args.m.or(file.m).unwrap_or(3),
        n: args.n.or(file.n),
        rho: ctx.rho(&args.rho)?,
        scaling,
        settings,
    };

    let mut points = bound_trajectory(&ctx.reduced, &grid, &targets, &opts, &ClarabelBackend)?;
    if args.with_oracle || file.with_oracle.unwrap_or(false) {
        attach_oracle(&mut points, &ctx.oracle()?);
    }
    let text = if format == "json" {
        to_json(&ctx.reduced, &opts, &points)? + "\n"
    } else {
        to_csv(&points)
    };
    ctx.emit(&text)?;

    let failed = points.iter().filter(|p| !p.optimal()).count();
    if failed > 0 {
        eprintln!("{failed} of {} points did not solve to optimality", points.len());
        return Ok(EXIT_SOLVER);
    }
    Ok(0)
}

fn cmd_oracle(args: &OracleArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let grid = ctx.grid(&args.grid)?;
    let sol = ctx.oracle()?.solve(&grid, 2);
    ctx.emit(&sol.to_csv(ctx.reduced.species_names()))?;
    Ok(0)
}

fn cmd_eigs(args: &EigsArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let k = args.k.or(ctx.file.k).unwrap_or(4);
    let eigs = ctx.oracle()?.eigenvalues(k + 1)?;
    let nonzero: Vec<_> = eigs.iter().copied().filter(|z| z.norm() > 0.0).take(k).collect();
    let rho = suggested_rho(&nonzero);
    let mut out = String::new();
    let list: Vec<String> = rho.iter().map(|&r| fmt_value(r)).collect();
    let _ = writeln!(out, "# suggested rho: {}", list.join(","));
    out.push_str("re,im\n");
    for z in eigs.iter().take(k + 1) {
        let _ = writeln!(out, "{},{}", fmt_value(z.re), fmt_value(z.im));
    }
    ctx.emit(&out)?;
    Ok(0)
}

fn cmd_ssa(args: &SsaArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let grid = ctx.grid(&args.grid)?;
    let paths = args.paths.or(ctx.file.paths).unwrap_or(1000);
    if paths == 0 {
        return Err(CliError::config("paths must be >= 1"));
    }
    let seed = args.seed.or(ctx.file.seed).unwrap_or(0);
    let summary = ssa_simulate(&ctx.reduced, &grid, paths, seed)?;
    ctx.emit(&summary.to_csv(ctx.reduced.species_names()))?;
    Ok(0)
}

fn cmd_check(args: &CheckArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let grid = ctx.grid(&args.grid)?;
    let rho = ctx.rho(&args.rho)?;
    let m = args.m.or(ctx.file.m).unwrap_or(3);
    let dynamics = build_moment_odes(&ctx.reduced, m).map_err(BoundError::from)?;
    let oracle = ctx.oracle()?;
    let species = &ctx.reduced.species_names()[0];
    let mut out = String::from("t,max_equality,min_eigenvalue,status\n");
    let mut violated = 0;
    for &t in &grid {
        let mut query = BoundQuery::new(species, Statistic::Mean, Sense::Upper, t, &rho);
        query.n = args.n.or(ctx.file.n);
        let r = truth_residuals(&ctx.reduced, &dynamics, &oracle, &query, 1e-11)?;
        let ok = r.max_equality <= args.tol && r.min_eigenvalue >= -args.tol;
        violated += usize::from(!ok);
        let status = if ok { "ok" } else { "violated" };
        let _ = writeln!(
            out,
            "{},{},{},{status}",
            fmt_value(t),
            fmt_value(r.max_equality),
            fmt_value(r.min_eigenvalue)
        );
    }
    ctx.emit(&out)?;
    if violated > 0 {
        eprintln!("{violated} of {} times violate the constraints", grid.len());
        return Ok(EXIT_SOLVER);
    }
    Ok(0)
}

fn cmd_odes(args: &OdesArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let m = args.m.or(ctx.file.m).unwrap_or(3);
    let dynamics = build_moment_odes(&ctx.reduced, m).map_err(BoundError::from)?;
    ctx.emit(&dynamics.to_csv())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bound(a) => cmd_bound(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Eigs(a) => cmd_eigs(a),
        Command::Ssa(a) => cmd_ssa(a),
        Command::Check(a) => cmd_check(a),
        Command::Odes(a) => cmd_odes(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
