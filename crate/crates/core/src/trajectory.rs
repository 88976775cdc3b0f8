//! Bound trajectories over a time grid: one independent SDP per
//! `(time, target, sense)`, solved in parallel and reported in grid order.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble, normalize_rho, scale_problem, AssemblyError, BoundQuery, ConstraintResiduals, Sense,
    Statistic, ValidationError,
};
use crate::cone::default_half_order;
use crate::dynamics::{build_moment_odes, DynamicsError, MomentBasis, MomentDynamics};
use crate::network::ReducedModel;
use crate::oracle::{suggested_rho, Oracle, OracleError};
use crate::solver::{ConicSolver, SolveStatus, SolverSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    pub species: String,
    pub statistic: Statistic,
}

impl Target {
    pub fn mean(species: &str) -> Self {
        Self {
            species: species.to_string(),
            statistic: Statistic::Mean,
        }
    }

    pub fn variance(species: &str) -> Self {
        Self {
            species: species.to_string(),
            statistic: Statistic::Variance,
        }
    }

    pub fn statistic_name(&self) -> &'static str {
        match self.statistic {
            Statistic::Mean => "mean",
            Statistic::Variance => "var",
        }
    }
}

impl FromStr for Target {
    type Err = String;

    /// `mean:A` or `var:A`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (stat, species) = s
            .split_once(':')
            .ok_or_else(|| format!("target `{s}` must look like mean:A or var:A"))?;
        let species = species.trim();
        if species.is_empty() {
            return Err(format!("target `{s}` has no species"));
        }
        match stat.trim() {
            "mean" => Ok(Self::mean(species)),
            "var" | "variance" => Ok(Self::variance(species)),
            other => Err(format!("unknown statistic `{other}` in target `{s}`")),
        }
    }
}

/// How the characteristic count for problem scaling is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scaling {
    None,
    /// Largest initial mean of an independent species, at least 1.
    Initial,
    Fixed(f64),
    /// Previous grid point's upper mean bound feeds the next point; sequential.
    Sweep,
}

impl FromStr for Scaling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "initial" => Ok(Self::Initial),
            "sweep" => Ok(Self::Sweep),
            _ => match s.strip_prefix("fixed:").map(str::parse::<f64>) {
                Some(Ok(v)) if v > 0.0 && v.is_finite() => Ok(Self::Fixed(v)),
                _ => Err(format!("scaling `{s}` must be none, initial, sweep or fixed:<positive>")),
            },
        }
    }
}

impl std::fmt::Display for Scaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::Initial => f.write_str("initial"),
            Self::Fixed(v) => write!(f, "fixed:{v}"),
            Self::Sweep => f.write_str("sweep"),
        }
    }
}

/// Explicit exponent set or `auto:k` from generator eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RhoSpec {
    Explicit(Vec<f64>),
    Auto(usize),
}

impl FromStr for RhoSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(k) = s.strip_prefix("auto:") {
            return k
                .parse()
                .map(Self::Auto)
                .map_err(|_| format!("`{s}`: expected auto:<count>"));
        }
        if s == "auto" {
            return Ok(Self::Auto(2));
        }
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad rho value `{p}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::Explicit)
    }
}

/// Real parts of the `k` smallest-magnitude distinct nonzero generator
/// eigenvalues, with 0 prepended.
pub fn auto_rho(oracle: &Oracle, k: usize) -> Result<Vec<f64>, OracleError> {
    let eigs = oracle.eigenvalues(k + 1)?;
    let nonzero: Vec<_> = eigs.into_iter().filter(|z| z.norm() > 0.0).take(k).collect();
    Ok(suggested_rho(&nonzero))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub m: u32,
    pub n: Option<u32>,
    pub rho: Vec<f64>,
    pub scaling: Scaling,
    pub settings: SolverSettings,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            m: 3,
            n: None,
            rho: vec![0.0],
            scaling: Scaling::Initial,
            settings: SolverSettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideResult {
    /// `NaN` unless the solve was optimal.
    pub value: f64,
    pub status: SolveStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: f64,
    pub target: Target,
    /// Absent for variances, whose lower bound is not computed.
    pub lower: Option<SideResult>,
    pub upper: SideResult,
    pub oracle: Option<f64>,
}

impl BoundPoint {
    pub fn optimal(&self) -> bool {
        self.upper.status == SolveStatus::Optimal
            && self.lower.is_none_or(|l| l.status == SolveStatus::Optimal)
    }

    pub fn gap(&self) -> f64 {
        match self.lower {
            Some(l) => self.upper.value - l.value,
            None => self.upper.value,
        }
    }

    pub fn status_label(&self) -> String {
        match self.lower {
            _ if self.optimal() => "Optimal".to_string(),
            Some(l) => format!("lower:{}/upper:{}", l.status, self.upper.status),
            None => self.upper.status.to_string(),
        }
    }
}

/// Characteristic count for `Scaling::Initial`.
pub fn initial_scale(reduced: &ReducedModel) -> f64 {
    let init = reduced.initial_reduced();
    (0..reduced.n_independent())
        .map(|a| init.iter().map(|(x, p)| p * x[a] as f64).sum::<f64>())
        .fold(1.0, f64::max)
}

/// Solves one side of one query. Infeasible or failed solves come back as a
/// status with a `NaN` value.
pub fn solve_side(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    query: &BoundQuery,
    s_char: f64,
    settings: &SolverSettings,
    solver: &dyn ConicSolver,
) -> Result<SideResult, BoundError> {
    let problem = assemble(reduced, dynamics, query)?;
    let (scaled, _) = scale_problem(&problem, s_char);
    let sol = solver.solve(&scaled, settings)?;
    let value = if sol.status == SolveStatus::Optimal {
        sol.bound
    } else {
        f64::NAN
    };
    Ok(SideResult {
        value,
        status: sol.status,
    })
}

fn solve_point(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    t: f64,
    target: &Target,
    opts: &BoundOptions,
    s_char: f64,
    solver: &dyn ConicSolver,
) -> Result<BoundPoint, BoundError> {
    let query = |sense| {
        BoundQuery::new(&target.species, target.statistic, sense, t, &opts.rho).with_half_order(opts.n)
    };
    let upper = solve_side(reduced, dynamics, &query(Sense::Upper), s_char, &opts.settings, solver)?;
    let lower = match target.statistic {
        Statistic::Mean => Some(solve_side(
            reduced,
            dynamics,
            &query(Sense::Lower),
            s_char,
            &opts.settings,
            solver,
        )?),
        Statistic::Variance => None,
    };
    Ok(BoundPoint {
        t,
        target: target.clone(),
        lower,
        upper,
        oracle: None,
    })
}

fn check_grid(grid: &[f64]) -> Result<(), BoundError> {
    if grid.is_empty() {
        return Err(BoundError::InvalidOptions("empty time grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(BoundError::InvalidOptions("grid times must be finite and >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BoundError::InvalidOptions("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Bounds for every `(t, target)`, ordered by time then target.
pub fn bound_trajectory(
    reduced: &ReducedModel,
    grid: &[f64],
    targets: &[Target],
    opts: &BoundOptions,
    solver: &dyn ConicSolver,
) -> Result<Vec<BoundPoint>, BoundError> {
    check_grid(grid)?;
    if targets.is_empty() {
        return Err(BoundError::InvalidOptions("no targets".into()));
    }
    for target in targets {
        reduced
            .species_functional(&target.species)
            .map_err(AssemblyError::from)?;
    }
    let dynamics = build_moment_odes(reduced, opts.m)?;
    let base_scale = match opts.scaling {
        Scaling::None => 1.0,
        Scaling::Fixed(s) => s,
        Scaling::Initial | Scaling::Sweep => initial_scale(reduced),
    };

    if opts.scaling == Scaling::Sweep {
        let mut out = Vec::with_capacity(grid.len() * targets.len());
        let mut scales = vec![base_scale; targets.len()];
        for &t in grid {
            for (target, s) in targets.iter().zip(scales.iter_mut()) {
                let point = solve_point(reduced, &dynamics, t, target, opts, *s, solver)?;
                if target.statistic == Statistic::Mean && point.upper.value.is_finite() {
                    *s = point.upper.value.max(1.0);
                }
                out.push(point);
            }
        }
        return Ok(out);
    }

    let jobs: Vec<(f64, &Target)> = grid
        .iter()
        .flat_map(|&t| targets.iter().map(move |target| (t, target)))
        .collect();
    jobs.par_iter()
        .map(|&(t, target)| solve_point(reduced, &dynamics, t, target, opts, base_scale, solver))
        .collect()
}

/// Fills the `oracle` field with the exact statistic from the CME solution.
pub fn attach_oracle(points: &mut [BoundPoint], oracle: &Oracle) {
    let mut times: Vec<f64> = points.iter().map(|p| p.t).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let sol = oracle.solve(&times, 1);
    for p in points {
        let k = times.iter().position(|&t| t == p.t).expect("time present");
        let Ok(i) = oracle.reduced.network.species_index(&p.target.species) else {
            continue;
        };
        p.oracle = Some(match p.target.statistic {
            Statistic::Mean => sol.means[k][i],
            Statistic::Variance => sol.variances[k][i],
        });
    }
}

/// Shortest round-trip decimal, switching to exponent form outside `[1e-6, 1e16)`.
pub fn fmt_value(v: f64) -> String {
    if !v.is_finite() {
        "NaN".to_string()
    } else if v != 0.0 && !(1e-6..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// `t,target,statistic,lower,upper,status[,oracle]`; the lower column is empty
/// for variances.
pub fn to_csv(points: &[BoundPoint]) -> String {
    let with_oracle = points.iter().any(|p| p.oracle.is_some());
    let mut out = String::from("t,target,statistic,lower,upper,status");
    if with_oracle {
        out.push_str(",oracle");
    }
    out.push('\n');
    for p in points {
        let lower = p.lower.map(|l| fmt_value(l.value)).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            fmt_value(p.t),
            p.target.species,
            p.target.statistic_name(),
            lower,
            fmt_value(p.upper.value),
            p.status_label()
        );
        if with_oracle {
            let _ = write!(out, ",{}", p.oracle.map(fmt_value).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryReport<'a> {
    pub version: &'static str,
    pub species: Vec<String>,
    pub rho: Vec<f64>,
    pub m: u32,
    pub n: u32,
    pub big_m: u32,
    pub scaling: String,
    pub settings: SolverSettings,
    pub points: &'a [BoundPoint],
}

/// JSON document with the run metadata and every point.
pub fn to_json(
    reduced: &ReducedModel,
    opts: &BoundOptions,
    points: &[BoundPoint],
) -> Result<String, BoundError> {
    let dynamics = build_moment_odes(reduced, opts.m)?;
    let report = TrajectoryReport {
        version: env!("CARGO_PKG_VERSION"),
        species: reduced.species_names().to_vec(),
        rho: normalize_rho(&opts.rho),
        m: opts.m,
        n: opts.n.unwrap_or_else(|| default_half_order(dynamics.big_m)),
        big_m: dynamics.big_m,
        scaling: opts.scaling.to_string(),
        settings: opts.settings,
        points,
    };
    // NaN is not valid JSON; serde_json writes it as null
    Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
}

/// Plugs the exact moments at `T` and quadrature integrals into every
/// constraint of the mean problem for `query` and reports the violations.
pub fn truth_residuals(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    oracle: &Oracle,
    query: &BoundQuery,
    quad_tol: f64,
) -> Result<ConstraintResiduals, BoundError> {
    let mut q = query.clone();
    q.statistic = Statistic::Mean;
    let problem = assemble(reduced, dynamics, &q)?;
    let n = q.n.unwrap_or_else(|| default_half_order(dynamics.big_m));
    let basis = MomentBasis::graded(reduced.n_independent(), 2 * n);
    let mut x = oracle.moments_at(q.time, &basis);
    for &rho in &normalize_rho(&q.rho) {
        x.extend(oracle.z_quadrature(rho, q.time, &basis, quad_tol));
    }
    Ok(problem.residuals(&x))
}
