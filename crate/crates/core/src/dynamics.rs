//! Graded moment basis and the linear moment equations `dmu_L/dt = A_L mu_L + A_H mu_H`.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::One;
use thiserror::Error;

use crate::network::ReducedModel;
use crate::poly::{MultiIndex, Polynomial};
use crate::rational::{to_f64, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("moment order cutoff must be at least 1")]
    OrderTooLow,
    #[error("term of order {order} exceeds the high-order cutoff {max}")]
    OrderOverflow { order: u32, max: u32 },
}

/// Multi-indices of total order `<= max_order`, graded, and within a grade
/// sorted by descending leading exponent (`(2,0), (1,1), (0,2)`).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentBasis {
    nvars: usize,
    max_order: u32,
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
}

fn compositions(total: u32, parts: usize, out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>) {
    if parts == 0 {
        if total == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, parts - 1, out, prefix);
        prefix.pop();
    }
}

impl MomentBasis {
    pub fn graded(nvars: usize, max_order: u32) -> Self {
        let mut raw = Vec::new();
        for d in 0..=max_order {
            compositions(d, nvars, &mut raw, &mut Vec::new());
        }
        let indices: Vec<MultiIndex> = raw.into_iter().map(MultiIndex).collect();
        let position = indices
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Self {
            nvars,
            max_order,
            indices,
            position,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn at(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.position.get(idx).copied()
    }

    /// Number of indices with order `<= d`.
    pub fn count_up_to(&self, d: u32) -> usize {
        self.indices.iter().take_while(|m| m.order() <= d).count()
    }

    /// Moments `sum_x p(x) x^j` of a distribution over integer points.
    pub fn moments_of<'a>(&self, dist: impl IntoIterator<Item = (&'a [i64], f64)>) -> Vec<f64> {
        let mut mu = vec![0.0; self.len()];
        for (x, p) in dist {
            for (k, j) in self.indices.iter().enumerate() {
                mu[k] += p * j.eval_i64(x);
            }
        }
        mu
    }
}

fn binomial(n: u32, k: u32) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

/// `(x + s)^j - x^j`, expanded.
pub fn shifted_monomial_delta(j: &MultiIndex, shift: &[i64]) -> Polynomial {
    let nvars = j.nvars();
    let mut prod = Polynomial::one(nvars);
    for (k, (&e, &s)) in j.0.iter().zip(shift).enumerate() {
        let mut factor = Polynomial::zero(nvars);
        for i in 0..=e {
            let coeff = binomial(e, i) * num_traits::pow(BigInt::from(s), (e - i) as usize);
            let mut idx = MultiIndex::zero(nvars);
            idx.0[k] = i;
            factor.add_term(idx, Rational::from_integer(coeff));
        }
        prod = prod.mul(&factor);
    }
    let mut mono = Polynomial::zero(nvars);
    mono.add_term(j.clone(), Rational::one());
    prod.sub(&mono)
}

/// Moment equations truncated at low order `m`.
#[derive(Clone, Debug)]
pub struct MomentDynamics {
    pub m: u32,
    /// Highest moment order appearing on the right-hand side.
    pub big_m: u32,
    /// Basis of all orders `<= big_m`; the first `n_low` entries are the low block.
    pub basis: MomentBasis,
    pub n_low: usize,
    pub a_low: DMatrix<f64>,
    pub a_high: DMatrix<f64>,
}

impl MomentDynamics {
    pub fn n_high(&self) -> usize {
        self.basis.len() - self.n_low
    }

    /// `A_L mu_L + A_H mu_H` for a moment vector laid out like `basis` (or longer).
    pub fn rhs(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.n_low)
            .map(|r| {
                let low: f64 = (0..self.n_low).map(|c| self.a_low[(r, c)] * mu[c]).sum();
                let high: f64 = (0..self.n_high())
                    .map(|c| self.a_high[(r, c)] * mu[self.n_low + c])
                    .sum();
                low + high
            })
            .collect()
    }

    /// `[A_L A_H]` as CSV with multi-index headers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for idx in self.basis.indices() {
            let _ = write!(out, ",mu{idx}");
        }
        out.push('\n');
        for r in 0..self.n_low {
            let _ = write!(out, "d/dt mu{}", self.basis.at(r));
            for c in 0..self.basis.len() {
                let v = if c < self.n_low {
                    self.a_low[(r, c)]
                } else {
                    self.a_high[(r, c - self.n_low)]
                };
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Highest moment order needed on the right-hand side for cutoff `m`.
pub fn high_order_cutoff(reduced: &ReducedModel, m: u32) -> u32 {
    m + reduced.max_order().max(1) - 1
}

pub fn build_moment_odes(reduced: &ReducedModel, m: u32) -> Result<MomentDynamics, DynamicsError> {
    if m < 1 {
        return Err(DynamicsError::OrderTooLow);
    }
    let nvars = reduced.n_independent();
    let big_m = high_order_cutoff(reduced, m);
    let basis = MomentBasis::graded(nvars, big_m);
    let n_low = basis.count_up_to(m);
    let n_high = basis.len() - n_low;
    let mut a_low = DMatrix::zeros(n_low, n_low);
    let mut a_high = DMatrix::zeros(n_low, n_high);

    for row in 0..n_low {
        let j = basis.at(row);
        for (r, prop) in reduced.propensity_polys.iter().enumerate() {
            let delta = shifted_monomial_delta(j, &reduced.reduced_stoichiometry[r]);
            if delta.is_zero() {
                continue;
            }
            let expr = prop.mul(&delta);
            for (idx, coeff) in expr.terms() {
                let col = basis.position(idx).ok_or(DynamicsError::OrderOverflow {
                    order: idx.order(),
                    max: big_m,
                })?;
                let v = reduced.rates[r] * to_f64(coeff);
                if col < n_low {
                    a_low[(row, col)] += v;
                } else {
                    a_high[(row, col - n_low)] += v;
                }
            }
        }
    }
    Ok(MomentDynamics {
        m,
        big_m,
        basis,
        n_low,
        a_low,
        a_high,
    })
}
