//! Assembly of the dynamic bounding SDPs.
//!
//! Decision vector layout: the moment vector at time `T` first, then one
//! exponentially weighted integral vector per `rho`, then an optional scalar
//! slack for variance bounds. Every segment is a truncated moment vector of
//! order `2n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{cone, default_half_order, AffineExpr, AffineSymmetricBlock, ConeError, MomentVector};
use crate::dynamics::{MomentBasis, MomentDynamics};
use crate::network::{LinearFunctional, NetworkError, ReducedModel};
use crate::poly::MultiIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("only upper bounds are available for the variance")]
    UnsupportedSense,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    Variance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Upper,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub species: String,
    pub statistic: Statistic,
    pub sense: Sense,
    pub time: f64,
    pub rho: Vec<f64>,
    /// Half-order of the relaxation; `None` means `ceil(M / 2)`.
    pub n: Option<u32>,
}

impl BoundQuery {
    pub fn new(species: &str, statistic: Statistic, sense: Sense, time: f64, rho: &[f64]) -> Self {
        Self {
            species: species.to_string(),
            statistic,
            sense,
            time,
            rho: rho.to_vec(),
            n: None,
        }
    }

    pub fn with_half_order(mut self, n: Option<u32>) -> Self {
        self.n = n;
        self
    }
}

/// `rho` values with 0 prepended if absent and duplicates removed, order kept.
pub fn normalize_rho(rho: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for &r in rho {
        if !out.iter().any(|&o: &f64| (o - r).abs() <= 1e-12 * (1.0 + r.abs())) {
            out.push(r);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    Moments,
    Integral { rho: f64 },
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub nvars: usize,
    /// Order of each entry of a moment segment.
    pub moment_orders: Vec<u32>,
    pub segments: Vec<Segment>,
    pub size: usize,
}

impl Layout {
    pub fn segment(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    pub fn slack(&self) -> Option<usize> {
        self.segment(SegmentKind::Slack).map(|s| s.offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqualityRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl EqualityRow {
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - self.rhs
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("malformed conic problem: {0}")]
pub struct ValidationError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub time: f64,
    pub layout: Layout,
    pub sense: ObjectiveSense,
    pub objective: AffineExpr,
    pub equalities: Vec<EqualityRow>,
    pub psd_blocks: Vec<AffineSymmetricBlock>,
}

/// Worst violations of a candidate point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintResiduals {
    pub max_equality: f64,
    pub min_eigenvalue: f64,
}

impl ConicProblem {
    pub fn n_vars(&self) -> usize {
        self.layout.size
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.layout.size;
        if n == 0 {
            return Err(ValidationError("empty decision vector".into()));
        }
        let check = |terms: &[(usize, f64)], what: &str| -> Result<(), ValidationError> {
            for &(i, c) in terms {
                if i >= n {
                    return Err(ValidationError(format!("{what} references variable {i} >= {n}")));
                }
                if !c.is_finite() {
                    return Err(ValidationError(format!("{what} has non-finite coefficient")));
                }
            }
            Ok(())
        };
        check(&self.objective.terms, "objective")?;
        for (r, row) in self.equalities.iter().enumerate() {
            check(&row.terms, &format!("equality {r}"))?;
            if !row.rhs.is_finite() {
                return Err(ValidationError(format!("equality {r} has non-finite rhs")));
            }
        }
        for (k, block) in self.psd_blocks.iter().enumerate() {
            if block.cells.len() != block.dim * (block.dim + 1) / 2 {
                return Err(ValidationError(format!("block {k} has wrong cell count")));
            }
            for cell in &block.cells {
                check(&cell.terms, &format!("block {k}"))?;
                if !cell.constant.is_finite() {
                    return Err(ValidationError(format!("block {k} has non-finite constant")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    pub fn residuals(&self, x: &[f64]) -> ConstraintResiduals {
        ConstraintResiduals {
            max_equality: self
                .equalities
                .iter()
                .map(|r| r.residual(x).abs())
                .fold(0.0, f64::max),
            min_eigenvalue: self
                .psd_blocks
                .iter()
                .map(|b| b.min_eigenvalue(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(text).map_err(|e| ValidationError(e.to_string()))
    }
}

/// Low-order moments of the initial distribution.
pub fn initial_low_moments(reduced: &ReducedModel, dynamics: &MomentDynamics) -> Vec<f64> {
    let init = reduced.initial_reduced();
    let all = dynamics
        .basis
        .moments_of(init.iter().map(|(x, p)| (x.as_slice(), *p)));
    all[..dynamics.n_low].to_vec()
}

/// Closed form of `int_0^T e^{rho (T - t)} dt`.
pub fn weight_integral(rho: f64, time: f64) -> f64 {
    if rho == 0.0 {
        time
    } else {
        (rho * time).exp_m1() / rho
    }
}

/// Integrated moment identity for one `rho`, one row per low-order index:
/// `mu_j(T) - [(A_L - rho I) z_L + A_H z_H]_j = e^{rho T} mu_j(0)`.
///
/// For `rho = 0` the zeroth row would only restate `mu_0(T) = 1`; it is
/// replaced by `z_0 = T`, the exact integral of the unit weight.
pub fn dynamic_equality_rows(
    dynamics: &MomentDynamics,
    initial_low: &[f64],
    rho: f64,
    time: f64,
    mu: MomentVector<'_>,
    z: MomentVector<'_>,
) -> Result<Vec<EqualityRow>, ConeError> {
    let basis = &dynamics.basis;
    let growth = (rho * time).exp();
    let mut rows = Vec::with_capacity(dynamics.n_low);
    for (j, &initial) in initial_low.iter().enumerate().take(dynamics.n_low) {
        let idx = basis.at(j);
        if j == 0 && rho == 0.0 {
            rows.push(EqualityRow {
                terms: vec![(z.var(idx)?, 1.0)],
                rhs: weight_integral(0.0, time),
            });
            continue;
        }
        let mut expr = AffineExpr::var(mu.var(idx)?);
        for c in 0..dynamics.n_low {
            let mut coeff = dynamics.a_low[(j, c)];
            if c == j {
                coeff -= rho;
            }
            expr.add_term(z.var(basis.at(c))?, -coeff);
        }
        for h in 0..dynamics.n_high() {
            expr.add_term(
                z.var(basis.at(dynamics.n_low + h))?,
                -dynamics.a_high[(j, h)],
            );
        }
        rows.push(EqualityRow {
            terms: expr.terms,
            rhs: growth * initial,
        });
    }
    Ok(rows)
}

struct Skeleton {
    problem: ConicProblem,
    basis: MomentBasis,
}

fn skeleton(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    query: &BoundQuery,
    with_slack: bool,
) -> Result<Skeleton, AssemblyError> {
    if !(query.time.is_finite() && query.time >= 0.0) {
        return Err(AssemblyError::InvalidQuery(format!("time must be >= 0, got {}", query.time)));
    }
    if query.rho.iter().any(|r| !r.is_finite()) {
        return Err(AssemblyError::InvalidQuery("rho values must be finite".into()));
    }
    let n = query.n.unwrap_or_else(|| default_half_order(dynamics.big_m));
    if n == 0 || 2 * n < dynamics.big_m {
        return Err(AssemblyError::InvalidQuery(format!(
            "half-order {n} too small: need 2n >= {}",
            dynamics.big_m
        )));
    }
    let nvars = reduced.n_independent();
    let basis = MomentBasis::graded(nvars, 2 * n);
    let len = basis.len();
    // every weighted integral vanishes at T = 0, so the integral segments are dropped
    let rho = if query.time == 0.0 {
        Vec::new()
    } else {
        normalize_rho(&query.rho)
    };

    let mut segments = vec![Segment {
        kind: SegmentKind::Moments,
        offset: 0,
        len,
    }];
    for (k, &r) in rho.iter().enumerate() {
        segments.push(Segment {
            kind: SegmentKind::Integral { rho: r },
            offset: (k + 1) * len,
            len,
        });
    }
    let mut size = (rho.len() + 1) * len;
    if with_slack {
        segments.push(Segment {
            kind: SegmentKind::Slack,
            offset: size,
            len: 1,
        });
        size += 1;
    }
    let layout = Layout {
        nvars,
        moment_orders: basis.indices().iter().map(MultiIndex::order).collect(),
        segments,
        size,
    };

    let mu = MomentVector {
        offset: 0,
        basis: &basis,
    };
    let initial_low = initial_low_moments(reduced, dynamics);
    let mut equalities = vec![EqualityRow {
        terms: vec![(mu.var(&MultiIndex::zero(nvars))?, 1.0)],
        rhs: 1.0,
    }];
    let mut psd_blocks: Vec<AffineSymmetricBlock> = cone(reduced, n, mu)?
        .blocks
        .into_iter()
        .map(|(_, b)| b)
        .collect();
    if rho.is_empty() {
        for (j, &value) in initial_low.iter().enumerate().take(dynamics.n_low).skip(1) {
            equalities.push(EqualityRow {
                terms: vec![(mu.var(basis.at(j))?, 1.0)],
                rhs: value,
            });
        }
    }
    for (k, &r) in rho.iter().enumerate() {
        let z = MomentVector {
            offset: (k + 1) * len,
            basis: &basis,
        };
        psd_blocks.extend(cone(reduced, n, z)?.blocks.into_iter().map(|(_, b)| b));
        equalities.extend(dynamic_equality_rows(dynamics, &initial_low, r, query.time, mu, z)?);
    }

    let problem = ConicProblem {
        time: query.time,
        layout,
        sense: ObjectiveSense::Maximize,
        objective: AffineExpr::default(),
        equalities,
        psd_blocks,
    };
    Ok(Skeleton { problem, basis })
}

fn mean_expr(f: &LinearFunctional, mu: MomentVector<'_>) -> Result<AffineExpr, ConeError> {
    let nvars = mu.basis.nvars();
    let mut e = AffineExpr::constant(f.constant);
    for (a, &w) in f.weights.iter().enumerate() {
        e.add_term(mu.var(&MultiIndex::unit(nvars, a))?, w);
    }
    Ok(e)
}

/// `E[f^2] = c0^2 + 2 c0 w.mu_1 + sum_ab w_a w_b mu_(e_a + e_b)`.
fn second_moment_expr(f: &LinearFunctional, mu: MomentVector<'_>) -> Result<AffineExpr, ConeError> {
    let nvars = mu.basis.nvars();
    let c0 = f.constant;
    let mut e = AffineExpr::constant(c0 * c0);
    for (a, &wa) in f.weights.iter().enumerate() {
        let ea = MultiIndex::unit(nvars, a);
        e.add_term(mu.var(&ea)?, 2.0 * c0 * wa);
        for (b, &wb) in f.weights.iter().enumerate() {
            let idx = ea.add(&MultiIndex::unit(nvars, b));
            e.add_term(mu.var(&idx)?, wa * wb);
        }
    }
    Ok(e)
}

/// Upper (maximize) or lower (minimize) bound on the mean count of a species.
pub fn assemble_mean_bound(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    query: &BoundQuery,
) -> Result<ConicProblem, AssemblyError> {
    if query.statistic != Statistic::Mean {
        return Err(AssemblyError::InvalidQuery("expected a mean query".into()));
    }
    let f = reduced.species_functional(&query.species)?;
    let Skeleton { mut problem, basis } = skeleton(reduced, dynamics, query, false)?;
    let mu = MomentVector {
        offset: 0,
        basis: &basis,
    };
    problem.objective = mean_expr(&f, mu)?;
    problem.sense = match query.sense {
        Sense::Upper => ObjectiveSense::Maximize,
        Sense::Lower => ObjectiveSense::Minimize,
    };
    Ok(problem)
}

/// Upper bound on the variance of a species count: maximize `s` subject to
/// `[[E f^2 - s, E f], [E f, 1]] >= 0` and the moment conditions.
pub fn assemble_variance_bound(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    query: &BoundQuery,
) -> Result<ConicProblem, AssemblyError> {
    if query.statistic != Statistic::Variance {
        return Err(AssemblyError::InvalidQuery("expected a variance query".into()));
    }
    if query.sense != Sense::Upper {
        return Err(AssemblyError::UnsupportedSense);
    }
    let f = reduced.species_functional(&query.species)?;
    let Skeleton { mut problem, basis } = skeleton(reduced, dynamics, query, true)?;
    let mu = MomentVector {
        offset: 0,
        basis: &basis,
    };
    let s = problem.layout.slack().expect("slack allocated");
    let mut block = AffineSymmetricBlock::new(2);
    let mut top = second_moment_expr(&f, mu)?;
    top.add_term(s, -1.0);
    *block.cell_mut(0, 0) = top;
    *block.cell_mut(1, 0) = mean_expr(&f, mu)?;
    *block.cell_mut(1, 1) = AffineExpr::constant(1.0);
    problem.psd_blocks.insert(0, block);
    problem.objective = AffineExpr::var(s);
    problem.sense = ObjectiveSense::Maximize;
    Ok(problem)
}

pub fn assemble(
    reduced: &ReducedModel,
    dynamics: &MomentDynamics,
    query: &BoundQuery,
) -> Result<ConicProblem, AssemblyError> {
    match query.statistic {
        Statistic::Mean => assemble_mean_bound(reduced, dynamics, query),
        Statistic::Variance => assemble_variance_bound(reduced, dynamics, query),
    }
}

/// Column scaling: original variables are `x = factors .* x_scaled`.
#[derive(Clone, Debug, PartialEq)]
pub struct Unscale {
    pub factors: Vec<f64>,
}

impl Unscale {
    pub fn apply(&self, x_scaled: &[f64]) -> Vec<f64> {
        x_scaled.iter().zip(&self.factors).map(|(x, d)| x * d).collect()
    }
}

/// Rescales a problem so that its variables are of order one.
///
/// A moment of order `|j|` is divided by `s_char^|j|`; integral segments are
/// further divided by `max(T, 1) e^{max(rho, 0) T}`; the variance slack by
/// `s_char^2`. Equality rows are normalized to unit infinity norm and each
/// PSD block gets a diagonal congruence equilibrating its diagonal. None of
/// this changes the optimal value.
pub fn scale_problem(problem: &ConicProblem, s_char: f64) -> (ConicProblem, Unscale) {
    assert!(s_char > 0.0, "characteristic count must be positive");
    let layout = &problem.layout;
    let t = problem.time;
    let mut factors = vec![1.0; layout.size];
    for seg in &layout.segments {
        match seg.kind {
            SegmentKind::Moments | SegmentKind::Integral { .. } => {
                let time_factor = match seg.kind {
                    SegmentKind::Integral { rho } => t.max(1.0) * (rho.max(0.0) * t).exp(),
                    _ => 1.0,
                };
                for k in 0..seg.len {
                    factors[seg.offset + k] =
                        s_char.powi(layout.moment_orders[k] as i32) * time_factor;
                }
            }
            SegmentKind::Slack => factors[seg.offset] = s_char * s_char,
        }
    }
    let scale_terms = |terms: &[(usize, f64)]| -> Vec<(usize, f64)> {
        terms.iter().map(|&(i, c)| (i, c * factors[i])).collect()
    };

    let equalities = problem
        .equalities
        .iter()
        .map(|row| {
            let terms = scale_terms(&row.terms);
            let norm = terms.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
            let norm = if norm > 0.0 { norm } else { 1.0 };
            EqualityRow {
                terms: terms.into_iter().map(|(i, c)| (i, c / norm)).collect(),
                rhs: row.rhs / norm,
            }
        })
        .collect();

    let psd_blocks = problem
        .psd_blocks
        .iter()
        .map(|block| {
            let mut out = block.clone();
            for cell in &mut out.cells {
                cell.terms = scale_terms(&cell.terms);
            }
            let diag: Vec<f64> = (0..out.dim)
                .map(|a| {
                    let c = out.cell(a, a);
                    let mag = c.terms.iter().map(|t| t.1.abs()).sum::<f64>() + c.constant.abs();
                    if mag > 0.0 {
                        mag.sqrt().recip()
                    } else {
                        1.0
                    }
                })
                .collect();
            for a in 0..out.dim {
                for b in 0..=a {
                    let d = diag[a] * diag[b];
                    let cell = out.cell_mut(a, b);
                    cell.constant *= d;
                    for t in &mut cell.terms {
                        t.1 *= d;
                    }
                }
            }
            out
        })
        .collect();

    let objective = AffineExpr {
        terms: scale_terms(&problem.objective.terms),
        constant: problem.objective.constant,
    };
    (
        ConicProblem {
            time: problem.time,
            layout: problem.layout.clone(),
            sense: problem.sense,
            objective,
            equalities,
            psd_blocks,
        },
        Unscale { factors },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_moment_odes;
    use crate::fixtures;
    use crate::network::reduce;

    fn toy() -> (ReducedModel, MomentDynamics) {
        let red = reduce(&fixtures::toy(), None).unwrap();
        let dy = build_moment_odes(&red, 3).unwrap();
        (red, dy)
    }

    #[test]
    fn rho_normalization() {
        assert_eq!(normalize_rho(&[-2.0, -2.0, 0.0]), vec![0.0, -2.0]);
        assert_eq!(normalize_rho(&[]), vec![0.0]);
    }

    #[test]
    fn toy_rows_rhs() {
        let (red, dy) = toy();
        let mu0 = initial_low_moments(&red, &dy);
        assert_eq!(mu0, vec![1.0, 3.0, 9.0, 27.0]);
        let basis = MomentBasis::graded(1, 4);
        let mu = MomentVector { offset: 0, basis: &basis };
        let z = MomentVector { offset: 5, basis: &basis };
        let rows = dynamic_equality_rows(&dy, &mu0, -2.0, 1.0, mu, z).unwrap();
        let e = (-2.0f64).exp();
        for (row, m0) in rows.iter().zip(&mu0) {
            assert!((row.rhs - e * m0).abs() < 1e-15);
        }
        let rows0 = dynamic_equality_rows(&dy, &mu0, 0.0, 1.0, mu, z).unwrap();
        assert_eq!(rows0[0].terms, vec![(5, 1.0)]);
        assert_eq!(rows0[0].rhs, 1.0);
        for (row, m0) in rows0.iter().zip(&mu0).skip(1) {
            assert_eq!(row.rhs, *m0);
        }
        // row for mu1 with rho = 0: mu1 - (-z1 - z2) = 3
        let mut t = rows0[1].terms.clone();
        t.sort_by_key(|p| p.0);
        assert_eq!(t, vec![(1, 1.0), (6, 1.0), (7, 1.0)]);
    }

    #[test]
    fn toy_mean_problem_structure() {
        let (red, dy) = toy();
        let q = BoundQuery::new("A", Statistic::Mean, Sense::Upper, 1.0, &[0.0, -2.0]);
        let p = assemble_mean_bound(&red, &dy, &q).unwrap();
        p.validate().unwrap();
        assert_eq!(p.n_vars(), 15);
        assert_eq!(p.psd_blocks.len(), 12);
        assert_eq!(p.equalities.len(), 1 + 2 * 4);
        let normalizations = p
            .equalities
            .iter()
            .filter(|r| r.terms == vec![(0, 1.0)] && r.rhs == 1.0)
            .count();
        assert_eq!(normalizations, 1);
        assert_eq!(p.objective.terms, vec![(1, 1.0)]);
        assert_eq!(p.sense, ObjectiveSense::Maximize);
    }

    #[test]
    fn dependent_species_objective() {
        let (red, dy) = toy();
        let q = BoundQuery::new("C", Statistic::Mean, Sense::Upper, 1.0, &[-2.0]);
        let p = assemble_mean_bound(&red, &dy, &q).unwrap();
        assert_eq!(p.objective.constant, 3.0);
        assert_eq!(p.objective.terms, vec![(1, -1.0)]);
    }

    #[test]
    fn variance_block_for_independent_species() {
        let (red, dy) = toy();
        let q = BoundQuery::new("A", Statistic::Variance, Sense::Upper, 1.0, &[-2.0]);
        let p = assemble_variance_bound(&red, &dy, &q).unwrap();
        let s = p.layout.slack().unwrap();
        assert_eq!(s, 15);
        let b = &p.psd_blocks[0];
        let mut top = b.cell(0, 0).terms.clone();
        top.sort_by_key(|t| t.0);
        assert_eq!(top, vec![(2, 1.0), (s, -1.0)]);
        assert_eq!(b.cell(1, 0).terms, vec![(1, 1.0)]);
        assert_eq!(b.cell(1, 1).constant, 1.0);
        let lower = BoundQuery::new("A", Statistic::Variance, Sense::Lower, 1.0, &[]);
        assert_eq!(
            assemble_variance_bound(&red, &dy, &lower).unwrap_err(),
            AssemblyError::UnsupportedSense
        );
    }

    #[test]
    fn dependent_variance_second_moment() {
        let red = reduce(&fixtures::reversible(), None).unwrap();
        let dy = build_moment_odes(&red, 3).unwrap();
        let q = BoundQuery::new("D", Statistic::Variance, Sense::Upper, 1.0, &[]);
        let p = assemble_variance_bound(&red, &dy, &q).unwrap();
        let top = p.psd_blocks[0].cell(0, 0);
        // basis: 00,10,01,20,11,02 -> 0..5
        let mut terms = top.terms.clone();
        terms.sort_by_key(|t| t.0);
        let s = p.layout.slack().unwrap();
        assert_eq!(
            terms,
            vec![(1, -6.0), (2, -6.0), (3, 1.0), (4, 2.0), (5, 1.0), (s, -1.0)]
        );
        assert_eq!(top.constant, 9.0);
    }

    #[test]
    fn unknown_species_and_bad_queries() {
        let (red, dy) = toy();
        let q = BoundQuery::new("Q", Statistic::Mean, Sense::Upper, 1.0, &[]);
        assert!(matches!(
            assemble_mean_bound(&red, &dy, &q),
            Err(AssemblyError::Network(NetworkError::UnknownSpecies(_)))
        ));
        let q = BoundQuery::new("A", Statistic::Mean, Sense::Upper, -1.0, &[]);
        assert!(matches!(assemble(&red, &dy, &q), Err(AssemblyError::InvalidQuery(_))));
        let q = BoundQuery::new("A", Statistic::Mean, Sense::Upper, 1.0, &[]).with_half_order(Some(1));
        assert!(matches!(assemble(&red, &dy, &q), Err(AssemblyError::InvalidQuery(_))));
    }

    #[test]
    fn unit_scaling_is_identity_on_variables() {
        let (red, dy) = toy();
        let q = BoundQuery::new("A", Statistic::Mean, Sense::Upper, 0.5, &[-2.0]);
        let p = assemble(&red, &dy, &q).unwrap();
        let (_, unscale) = scale_problem(&p, 1.0);
        assert!(unscale.factors.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn scaling_factors_follow_moment_order() {
        let (red, dy) = toy();
        let q = BoundQuery::new("A", Statistic::Mean, Sense::Upper, 2.0, &[-2.0]);
        let p = assemble(&red, &dy, &q).unwrap();
        let (sp, unscale) = scale_problem(&p, 4.0);
        assert_eq!(unscale.factors[4], 4f64.powi(4));
        assert_eq!(unscale.factors[5 + 4], 4f64.powi(4) * 2.0);
        // a point satisfying the original constraints maps to one satisfying the scaled ones
        let x: Vec<f64> = (0..p.n_vars()).map(|i| 0.1 * i as f64).collect();
        let xs: Vec<f64> = x.iter().zip(&unscale.factors).map(|(v, d)| v / d).collect();
        for (orig, scaled) in p.equalities.iter().zip(&sp.equalities) {
            let norm = orig.residual(&x) / scaled.residual(&xs);
            assert!(norm.is_finite() && norm > 0.0);
        }
        assert!((sp.objective_value(&xs) - p.objective_value(&x)).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let (red, dy) = toy();
        let q = BoundQuery::new("A", Statistic::Variance, Sense::Upper, 1.0, &[-2.0]);
        let p = assemble(&red, &dy, &q).unwrap();
        assert_eq!(ConicProblem::from_json(&p.to_json()).unwrap(), p);
    }
}
