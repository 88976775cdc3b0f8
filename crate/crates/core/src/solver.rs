//! Uniform solve contract for assembled conic problems.
//!
//! The default backend presolves (substitutes variables pinned by single-term
//! equalities, then splits the rest into independent components) and hands
//! each component to Clarabel (interior point, homogeneous self-dual
//! embedding, PSD triangle cones). The reported bound is the dual-side
//! objective.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::assembly::{ConicProblem, EqualityRow, ObjectiveSense, ValidationError};
use crate::cone::{AffineExpr, AffineSymmetricBlock};

// links the system OpenBLAS used by the PSD cone kernels
use openblas_src as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "Optimal",
            Self::Infeasible => "Infeasible",
            Self::Unbounded => "Unbounded",
            Self::NumericalFailure => "NumericalFailure",
            Self::IterLimit => "IterLimit",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub gap: f64,
    pub feas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gap: 1e-8,
            feas: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: Tolerances,
    pub iter_cap: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            iter_cap: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSolution {
    pub status: SolveStatus,
    /// Objective at the returned primal point.
    pub primal_objective: f64,
    /// Dual-side objective; the value to publish as a bound.
    pub bound: f64,
    pub x: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: u32,
}

pub trait ConicSolver: Send + Sync {
    fn solve(
        &self,
        problem: &ConicProblem,
        settings: &SolverSettings,
    ) -> Result<SolverSolution, ValidationError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelBackend;

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    fn push_row(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let r = self.b.len();
        for &(c, v) in terms {
            if v != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.b.push(rhs);
    }
}

/// Problem left after substituting variables pinned by single-term equality
/// rows and dropping blocks that became constant.
struct Presolved {
    n: usize,
    /// Compact index to original index.
    keep: Vec<usize>,
    fixed: Vec<Option<f64>>,
    objective: AffineExpr,
    equalities: Vec<EqualityRow>,
    blocks: Vec<AffineSymmetricBlock>,
}

const PRESOLVE_TOL: f64 = 1e-9;

/// `None` when the fixed values already violate a constraint.
fn presolve(problem: &ConicProblem) -> Option<Presolved> {
    let n = problem.n_vars();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut rows = problem.equalities.clone();
    loop {
        let mut changed = false;
        let mut kept = Vec::with_capacity(rows.len());
        for row in rows {
            let mut rhs = row.rhs;
            let mut scale = 1.0 + row.rhs.abs();
            let mut terms = Vec::new();
            for &(i, c) in &row.terms {
                match fixed[i] {
                    _ if c == 0.0 => {}
                    Some(v) => {
                        rhs -= c * v;
                        scale += (c * v).abs();
                    }
                    None => terms.push((i, c)),
                }
            }
            match terms.as_slice() {
                [] if rhs.abs() > PRESOLVE_TOL * scale => return None,
                [] => {}
                &[(i, c)] => {
                    fixed[i] = Some(rhs / c);
                    changed = true;
                }
                _ => kept.push(EqualityRow { terms, rhs }),
            }
        }
        rows = kept;
        if !changed {
            break;
        }
    }

    let substitute = |e: &AffineExpr| {
        let mut out = AffineExpr::constant(e.constant);
        for &(i, c) in &e.terms {
            match fixed[i] {
                Some(v) => out.constant += c * v,
                None => out.add_term(i, c),
            }
        }
        out
    };
    let mut objective = substitute(&problem.objective);
    let mut blocks = Vec::new();
    for block in &problem.psd_blocks {
        let mut b = block.clone();
        for cell in &mut b.cells {
            *cell = substitute(cell);
        }
        if b.cells.iter().all(|c| c.terms.is_empty()) {
            let m = b.evaluate(&[]);
            let scale = 1.0 + m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if b.min_eigenvalue(&[]) < -PRESOLVE_TOL * scale {
                return None;
            }
        } else {
            blocks.push(b);
        }
    }

    let mut compact = vec![usize::MAX; n];
    let mut keep = Vec::new();
    let mut touch = |i: usize| {
        if compact[i] == usize::MAX {
            compact[i] = keep.len();
            keep.push(i);
        }
    };
    for &(i, _) in rows.iter().flat_map(|r| r.terms.iter()) {
        touch(i);
    }
    for b in &blocks {
        for &(i, _) in b.cells.iter().flat_map(|c| c.terms.iter()) {
            touch(i);
        }
    }
    for &(i, _) in &objective.terms {
        touch(i);
    }
    let remap = |terms: &mut Vec<(usize, f64)>| {
        for t in terms.iter_mut() {
            t.0 = compact[t.0];
        }
    };
    for r in &mut rows {
        remap(&mut r.terms);
    }
    for b in &mut blocks {
        for c in &mut b.cells {
            remap(&mut c.terms);
        }
    }
    remap(&mut objective.terms);
    Some(Presolved {
        n: keep.len(),
        keep,
        fixed,
        objective,
        equalities: rows,
        blocks,
    })
}

impl Presolved {
    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &i) in self.keep.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }
}

fn trivial_solution(status: SolveStatus, value: f64, x: Vec<f64>) -> SolverSolution {
    SolverSolution {
        status,
        primal_objective: value,
        bound: value,
        x,
        primal_residual: 0.0,
        dual_residual: 0.0,
        gap: 0.0,
        iterations: 0,
    }
}

/// Variables coupled through shared rows or blocks.
#[derive(Default)]
struct Component {
    vars: Vec<usize>,
    rows: Vec<usize>,
    blocks: Vec<usize>,
}

fn components(pre: &Presolved) -> Vec<Component> {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..pre.n).collect();
    let mut join = |vars: &mut dyn Iterator<Item = usize>| {
        if let Some(first) = vars.next() {
            let root = find(&mut parent, first);
            for v in vars {
                let r = find(&mut parent, v);
                parent[r] = root;
            }
        }
    };
    for row in &pre.equalities {
        join(&mut row.terms.iter().map(|t| t.0));
    }
    for b in &pre.blocks {
        join(&mut b.cells.iter().flat_map(|c| c.terms.iter().map(|t| t.0)));
    }
    let mut slot = vec![usize::MAX; pre.n];
    let mut out: Vec<Component> = Vec::new();
    for v in 0..pre.n {
        let r = find(&mut parent, v);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Component::default());
        }
        out[slot[r]].vars.push(v);
    }
    let owner = |v: usize, parent: &mut [usize]| slot[find(parent, v)];
    for (k, row) in pre.equalities.iter().enumerate() {
        let c = owner(row.terms[0].0, &mut parent);
        out[c].rows.push(k);
    }
    for (k, b) in pre.blocks.iter().enumerate() {
        let v = b.cells.iter().find_map(|c| c.terms.first()).expect("block has a variable").0;
        let c = owner(v, &mut parent);
        out[c].blocks.push(k);
    }
    out
}

struct ComponentSolution {
    status: SolveStatus,
    primal: f64,
    dual: f64,
    x: Vec<f64>,
    primal_residual: f64,
    dual_residual: f64,
    gap: f64,
    iterations: u32,
}

/// One component through Clarabel, as `min q.x` over its local variables.
fn solve_component(
    pre: &Presolved,
    comp: &Component,
    q_full: &[f64],
    settings: &SolverSettings,
) -> Result<ComponentSolution, ValidationError> {
    let n = comp.vars.len();
    let mut local = vec![usize::MAX; pre.n];
    for (k, &v) in comp.vars.iter().enumerate() {
        local[v] = k;
    }
    let q: Vec<f64> = comp.vars.iter().map(|&v| q_full[v]).collect();
    let loc = |terms: &[(usize, f64)], w: f64| -> Vec<(usize, f64)> {
        terms.iter().map(|&(i, c)| (local[i], w * c)).collect()
    };

    // A x + s = b with s in {0}^p x PSD_1 x PSD_2 ...
    let mut t = Triplets {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
    };
    let mut cones = Vec::new();
    for &r in &comp.rows {
        let row = &pre.equalities[r];
        t.push_row(&loc(&row.terms, 1.0), row.rhs);
    }
    if !comp.rows.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(comp.rows.len()));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for &k in &comp.blocks {
        let block = &pre.blocks[k];
        // svec of the upper triangle by columns equals the lower triangle by rows
        for a in 0..block.dim {
            for b in 0..=a {
                let cell = block.cell(a, b);
                let w = if a == b { 1.0 } else { sqrt2 };
                t.push_row(&loc(&cell.terms, -w), w * cell.constant);
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
    }
    let m = t.b.len();
    let a = CscMatrix::new_from_triplets(m, n, t.rows, t.cols, t.vals);
    let p = CscMatrix::<f64>::zeros((n, n));

    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.iter_cap)
        .tol_gap_abs(settings.tol.gap)
        .tol_gap_rel(settings.tol.gap)
        .tol_feas(settings.tol.feas)
        .build()
        .map_err(|e| ValidationError(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &t.b, &cones, clarabel_settings)
        .map_err(|e| ValidationError(format!("solver setup: {e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let info = &solver.info;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterLimit,
        _ => SolveStatus::NumericalFailure,
    };
    // a pure feasibility component contributes nothing to the objective
    let (mut primal, mut dual) = if q.iter().all(|&c| c == 0.0) {
        (0.0, 0.0)
    } else {
        (sol.obj_val, sol.obj_val_dual)
    };
    let mut x = sol.x.clone();
    if status == SolveStatus::Optimal && n == 1 && q[0] != 0.0 && comp.rows.is_empty() {
        let blocks: Vec<&AffineSymmetricBlock> = comp.blocks.iter().map(|&k| &pre.blocks[k]).collect();
        if let Some((inside, outside)) = polish_scalar(&blocks, comp.vars[0], x[0], -q[0].signum()) {
            x[0] = inside;
            primal = q[0] * inside;
            dual = q[0] * outside;
        }
    }
    Ok(ComponentSolution {
        status,
        primal,
        dual,
        x,
        primal_residual: info.res_primal,
        dual_residual: info.res_dual,
        gap: info.gap_abs,
        iterations: info.iterations,
    })
}

/// Smallest eigenvalue over all blocks with the single free variable at `x`.
fn scalar_min_eigenvalue(blocks: &[&AffineSymmetricBlock], var: usize, x: f64) -> f64 {
    let mut point = vec![0.0; var + 1];
    point[var] = x;
    blocks
        .iter()
        .map(|b| b.min_eigenvalue(&point))
        .fold(f64::INFINITY, f64::min)
}

/// Refines the optimum of a one-variable component, whose feasible set is an
/// interval: bisects the sign change of the concave smallest eigenvalue along
/// the improving direction. Returns a feasible point and an infeasible one
/// adjacent to the boundary.
fn polish_scalar(
    blocks: &[&AffineSymmetricBlock],
    var: usize,
    x0: f64,
    direction: f64,
) -> Option<(f64, f64)> {
    let lambda = |x: f64| scalar_min_eigenvalue(blocks, var, x);
    let unit = 1e-12 * (1.0 + x0.abs());
    let find = |sign: f64, want_feasible: bool| -> Option<f64> {
        let mut step = unit;
        for _ in 0..40 {
            let x = x0 + sign * direction * step;
            if (lambda(x) >= 0.0) == want_feasible {
                return Some(x);
            }
            step *= 2.0;
        }
        None
    };
    let mut inside = if lambda(x0) >= 0.0 { x0 } else { find(-1.0, true)? };
    let mut outside = find(1.0, false)?;
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if lambda(mid) >= 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Some((inside, outside))
}

fn worse(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    let rank = |s: SolveStatus| match s {
        SolveStatus::Optimal => 0,
        SolveStatus::IterLimit => 1,
        SolveStatus::NumericalFailure => 2,
        SolveStatus::Unbounded => 3,
        SolveStatus::Infeasible => 4,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

impl ConicSolver for ClarabelBackend {
    fn solve(
        &self,
        problem: &ConicProblem,
        settings: &SolverSettings,
    ) -> Result<SolverSolution, ValidationError> {
        problem.validate()?;
        let Some(pre) = presolve(problem) else {
            return Ok(trivial_solution(
                SolveStatus::Infeasible,
                f64::NAN,
                vec![0.0; problem.n_vars()],
            ));
        };
        let constant = pre.objective.constant;
        let sign = match problem.sense {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        };
        let mut q = vec![0.0; pre.n];
        for &(i, c) in &pre.objective.terms {
            q[i] += sign * c;
        }

        let mut out = trivial_solution(SolveStatus::Optimal, constant, Vec::new());
        let mut x = vec![0.0; pre.n];
        for comp in components(&pre) {
            let s = solve_component(&pre, &comp, &q, settings)?;
            out.status = worse(out.status, s.status);
            out.primal_objective += sign * s.primal;
            out.bound += sign * s.dual;
            out.primal_residual = out.primal_residual.max(s.primal_residual);
            out.dual_residual = out.dual_residual.max(s.dual_residual);
            out.gap += s.gap;
            out.iterations = out.iterations.max(s.iterations);
            for (k, &v) in comp.vars.iter().enumerate() {
                x[v] = s.x[k];
            }
        }
        out.x = pre.expand(&x);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{Layout, Segment, SegmentKind};

    fn problem(n: usize, sense: ObjectiveSense, objective: AffineExpr) -> ConicProblem {
        ConicProblem {
            time: 0.0,
            layout: Layout {
                nvars: 0,
                moment_orders: vec![],
                segments: vec![Segment {
                    kind: SegmentKind::Slack,
                    offset: 0,
                    len: n,
                }],
                size: n,
            },
            sense,
            objective,
            equalities: vec![],
            psd_blocks: vec![],
        }
    }

    #[test]
    fn one_by_one_psd() {
        let mut p = problem(1, ObjectiveSense::Minimize, AffineExpr::var(0));
        let mut b = AffineSymmetricBlock::new(1);
        *b.cell_mut(0, 0) = AffineExpr::var(0);
        p.psd_blocks.push(b);
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.x[0].abs() < 1e-7);
        assert!(s.bound <= s.primal_objective + 1e-9);
    }

    #[test]
    fn schur_complement() {
        // maximize s with [[2 - s, 1], [1, 1]] >= 0  =>  s = 1
        let mut p = problem(1, ObjectiveSense::Maximize, AffineExpr::var(0));
        let mut b = AffineSymmetricBlock::new(2);
        *b.cell_mut(0, 0) = AffineExpr {
            terms: vec![(0, -1.0)],
            constant: 2.0,
        };
        *b.cell_mut(1, 0) = AffineExpr::constant(1.0);
        *b.cell_mut(1, 1) = AffineExpr::constant(1.0);
        p.psd_blocks.push(b);
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        // a single-variable component is polished to the boundary
        assert!((s.primal_objective - 1.0).abs() < 1e-14);
        assert!(s.bound >= 1.0 && s.bound - 1.0 < 1e-14);
    }

    fn geq(var: usize, c: f64) -> AffineSymmetricBlock {
        let mut b = AffineSymmetricBlock::new(1);
        *b.cell_mut(0, 0) = AffineExpr {
            terms: vec![(var, 1.0)],
            constant: -c,
        };
        b
    }

    #[test]
    fn singleton_rows_are_substituted() {
        let mut p = problem(2, ObjectiveSense::Maximize, AffineExpr::var(1));
        p.equalities.push(EqualityRow {
            terms: vec![(0, 2.0)],
            rhs: 4.0,
        });
        p.equalities.push(EqualityRow {
            terms: vec![(0, 1.0), (1, 1.0)],
            rhs: 5.0,
        });
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.bound, 3.0);
        assert_eq!(s.x, vec![2.0, 3.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn fixed_values_violating_a_block_are_infeasible() {
        let mut p = problem(1, ObjectiveSense::Maximize, AffineExpr::var(0));
        p.equalities.push(EqualityRow {
            terms: vec![(0, 1.0)],
            rhs: 1.0,
        });
        p.psd_blocks.push(geq(0, 2.0));
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn independent_components_add_up() {
        let mut obj = AffineExpr::var(0);
        obj.add_term(1, 1.0);
        let mut p = problem(2, ObjectiveSense::Minimize, obj);
        p.psd_blocks.push(geq(0, 1.0));
        p.psd_blocks.push(geq(1, 2.0));
        let pre = presolve(&p).unwrap();
        assert_eq!(components(&pre).len(), 2);
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.bound - 3.0).abs() < 1e-12);
        assert!(s.bound <= 3.0);
    }

    #[test]
    fn unbounded_component() {
        let mut p = problem(1, ObjectiveSense::Maximize, AffineExpr::var(0));
        p.psd_blocks.push(geq(0, 1.0));
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut p = problem(1, ObjectiveSense::Minimize, AffineExpr::var(0));
        p.equalities.push(EqualityRow {
            terms: vec![(0, 1.0)],
            rhs: 1.0,
        });
        p.equalities.push(EqualityRow {
            terms: vec![(0, 1.0)],
            rhs: 2.0,
        });
        let s = ClarabelBackend.solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn malformed_problem_is_rejected() {
        let p = problem(1, ObjectiveSense::Minimize, AffineExpr::var(3));
        assert!(ClarabelBackend.solve(&p, &SolverSettings::default()).is_err());
    }
}
