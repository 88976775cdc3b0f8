//! Moment and localizing matrices that describe the cone of truncated moment
//! vectors of distributions supported on the reduced polyhedron.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::MomentBasis;
use crate::network::ReducedModel;
use crate::poly::{MultiIndex, Polynomial};
use crate::rational::to_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("moment {0} is not part of the decision vector")]
    MissingMoment(MultiIndex),
}

/// Sparse affine expression `constant + sum_i coeff_i * x_i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, i: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(j, _)| *j == i) {
            Some((_, v)) => *v += c,
            None => self.terms.push((i, c)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// Symmetric matrix whose lower-triangle cells are affine in the decision vector.
///
/// Cells are stored row-major over the lower triangle: `(0,0), (1,0), (1,1), (2,0), ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSymmetricBlock {
    pub dim: usize,
    pub cells: Vec<AffineExpr>,
}

impl AffineSymmetricBlock {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            cells: vec![AffineExpr::default(); dim * (dim + 1) / 2],
        }
    }

    pub fn cell_index(a: usize, b: usize) -> usize {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        hi * (hi + 1) / 2 + lo
    }

    pub fn cell(&self, a: usize, b: usize) -> &AffineExpr {
        &self.cells[Self::cell_index(a, b)]
    }

    pub fn cell_mut(&mut self, a: usize, b: usize) -> &mut AffineExpr {
        &mut self.cells[Self::cell_index(a, b)]
    }

    pub fn max_index(&self) -> Option<usize> {
        self.cells
            .iter()
            .flat_map(|c| c.terms.iter().map(|&(i, _)| i))
            .max()
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.cell(a, b).eval(x))
    }

    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        self.evaluate(x)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Where a truncated moment vector lives inside the decision vector.
#[derive(Clone, Copy, Debug)]
pub struct MomentVector<'a> {
    pub offset: usize,
    pub basis: &'a MomentBasis,
}

impl MomentVector<'_> {
    pub fn var(&self, idx: &MultiIndex) -> Result<usize, ConeError> {
        self.basis
            .position(idx)
            .map(|p| self.offset + p)
            .ok_or_else(|| ConeError::MissingMoment(idx.clone()))
    }
}

/// Truncated moment matrix: rows and columns indexed by monomials of order
/// `<= n`, cell `(a, b)` holding the moment of `x^(i_a + i_b)`.
pub fn moment_matrix(n: u32, v: MomentVector<'_>) -> Result<AffineSymmetricBlock, ConeError> {
    let one = Polynomial::one(v.basis.nvars());
    localizing_matrix(&one, n, v)
}

/// Localizing matrix of `g`: cell `(a, b)` is `sum_gamma g_gamma mu_(i_a + i_b + gamma)`,
/// rows indexed by monomials of order `<= order`.
pub fn localizing_matrix(
    g: &Polynomial,
    order: u32,
    v: MomentVector<'_>,
) -> Result<AffineSymmetricBlock, ConeError> {
    let rows = MomentBasis::graded(v.basis.nvars(), order);
    let mut block = AffineSymmetricBlock::new(rows.len());
    for a in 0..rows.len() {
        for b in 0..=a {
            let base = rows.at(a).add(rows.at(b));
            let cell = block.cell_mut(a, b);
            for (gamma, coeff) in g.terms() {
                cell.add_term(v.var(&base.add(gamma))?, to_f64(coeff));
            }
        }
    }
    Ok(block)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeBlockKind {
    Moment,
    /// Nonnegativity of an independent species (species index).
    Independent(usize),
    /// Nonnegativity of a dependent species (species index).
    Dependent(usize),
}

#[derive(Clone, Debug)]
pub struct ConeDescription {
    pub n: u32,
    pub blocks: Vec<(ConeBlockKind, AffineSymmetricBlock)>,
}

/// Default relaxation half-order `ceil(M / 2)`.
pub fn default_half_order(big_m: u32) -> u32 {
    big_m.div_ceil(2).max(1)
}

/// All LMIs expressing support on `{x^ >= 0, alpha - beta x^ >= 0}`.
pub fn cone(
    reduced: &ReducedModel,
    n: u32,
    v: MomentVector<'_>,
) -> Result<ConeDescription, ConeError> {
    let nvars = reduced.n_independent();
    let mut blocks = vec![(ConeBlockKind::Moment, moment_matrix(n, v)?)];
    if n >= 1 {
        for (j, &species) in reduced.independent.iter().enumerate() {
            let g = Polynomial::var(nvars, j);
            blocks.push((
                ConeBlockKind::Independent(species),
                localizing_matrix(&g, n - 1, v)?,
            ));
        }
        for (k, &species) in reduced.dependent.iter().enumerate() {
            let g = reduced.dependent_polynomial(k);
            blocks.push((
                ConeBlockKind::Dependent(species),
                localizing_matrix(&g, n - 1, v)?,
            ));
        }
    }
    Ok(ConeDescription { n, blocks })
}
