//! Reaction networks, conservation laws and the reduced (independent-species) model.
//!
//! The reduced model keeps only the independent species. Every dependent count is
//! an affine function of the independent counts, `x_dep = alpha - beta * x_ind`,
//! and each mass-action propensity becomes a polynomial in the independent counts.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::poly::Polynomial;
use crate::rational::{primitive_integer_vector, rat, to_f64, Rational, RationalMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("reaction {reaction}: rate constant must be positive and finite, got {rate}")]
    NonPositiveRate { reaction: usize, rate: f64 },
    #[error("initial probabilities are invalid: {0}")]
    BadProbability(String),
    #[error("initial states lie in different invariant classes")]
    InconsistentInvariants,
    #[error("chosen dependent species do not form an invertible invariant block")]
    SingularChoice,
    #[error("no invertible choice of dependent species exists")]
    NoValidChoice,
    #[error("invalid independent-species choice: {0}")]
    BadChoice(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    /// Reactant coefficients, one per species.
    pub reactants: Vec<u32>,
    /// Product coefficients, one per species.
    pub products: Vec<u32>,
    pub rate: f64,
}

impl Reaction {
    /// Molecularity: total number of reactant molecules.
    pub fn order(&self) -> u32 {
        self.reactants.iter().sum()
    }

    pub fn net_change(&self) -> Vec<i64> {
        self.products
            .iter()
            .zip(&self.reactants)
            .map(|(&p, &r)| i64::from(p) - i64::from(r))
            .collect()
    }

    /// Mass-action propensity `c * prod_i C(x_i, nu_i)` at a full state.
    pub fn propensity(&self, x: &[i64]) -> f64 {
        let mut a = self.rate;
        for (&nu, &xi) in self.reactants.iter().zip(x) {
            for k in 0..nu {
                a *= (xi - i64::from(k)) as f64 / f64::from(k + 1);
            }
            if a <= 0.0 {
                return 0.0;
            }
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<String>,
    pub reactions: Vec<Reaction>,
    /// Support of the initial distribution: full states and their probabilities.
    pub initial: Vec<(Vec<i64>, f64)>,
}

impl ReactionNetwork {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Result<usize, NetworkError> {
        self.species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| NetworkError::UnknownSpecies(name.to_string()))
    }

    pub fn max_order(&self) -> u32 {
        self.reactions.iter().map(Reaction::order).max().unwrap_or(0)
    }
}

/// Integer stoichiometry matrix, `N x R`; column `r` is the net change of reaction `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoichiometryMatrix {
    pub n_species: usize,
    pub columns: Vec<Vec<i64>>,
}

impl StoichiometryMatrix {
    pub fn column(&self, r: usize) -> &[i64] {
        &self.columns[r]
    }

    pub fn to_rational(&self) -> RationalMatrix {
        RationalMatrix::from_i64(self.n_species, self.columns.len(), |i, r| self.columns[r][i])
    }
}

pub fn stoichiometry(network: &ReactionNetwork) -> StoichiometryMatrix {
    StoichiometryMatrix {
        n_species: network.n_species(),
        columns: network.reactions.iter().map(Reaction::net_change).collect(),
    }
}

/// Conservation laws `B x = f`.
#[derive(Clone, Debug, PartialEq)]
pub struct Invariants {
    /// `L x N`, integer rows with gcd 1 and positive leading entry.
    pub b: RationalMatrix,
    pub f: Vec<Rational>,
}

impl Invariants {
    pub fn count(&self) -> usize {
        self.b.rows()
    }
}

/// Left null space of `S` by exact elimination, evaluated on the initial support.
pub fn invariants(
    s: &StoichiometryMatrix,
    initial_support: &[Vec<i64>],
) -> Result<Invariants, NetworkError> {
    let n = s.n_species;
    let basis: Vec<Vec<Rational>> = if s.columns.is_empty() {
        (0..n)
            .map(|i| (0..n).map(|j| rat(i64::from(i == j))).collect())
            .collect()
    } else {
        s.to_rational().transpose().nullspace()
    };
    let rows: Vec<Vec<Rational>> = basis
        .iter()
        .map(|v| {
            primitive_integer_vector(v)
                .into_iter()
                .map(Rational::from_integer)
                .collect()
        })
        .collect();
    let b = if rows.is_empty() {
        RationalMatrix::zeros(0, n)
    } else {
        RationalMatrix::from_rows(&rows)
    };
    let mut f: Option<Vec<Rational>> = None;
    for x in initial_support {
        let xr: Vec<Rational> = x.iter().map(|&v| rat(v)).collect();
        let fx = b.mul_vec(&xr);
        match &f {
            None => f = Some(fx),
            Some(prev) if *prev != fx => return Err(NetworkError::InconsistentInvariants),
            _ => {}
        }
    }
    Ok(Invariants {
        f: f.unwrap_or_else(|| vec![Rational::zero(); b.rows()]),
        b,
    })
}

/// Greedy choice of dependent species: repeatedly take the column with the
/// largest remaining pivot, preferring later species on ties.
fn greedy_dependent(b: &RationalMatrix) -> Result<Vec<usize>, NetworkError> {
    let l = b.rows();
    let n = b.cols();
    let mut work = b.clone();
    let mut used_rows = vec![false; l];
    let mut chosen = Vec::with_capacity(l);
    for _ in 0..l {
        let mut best: Option<(Rational, usize, usize)> = None;
        for c in (0..n).rev() {
            if chosen.contains(&c) {
                continue;
            }
            for r in (0..l).filter(|&r| !used_rows[r]) {
                let v = work[(r, c)].abs();
                if v.is_zero() {
                    continue;
                }
                if best.as_ref().is_none_or(|(bv, _, _)| v > *bv) {
                    best = Some((v, r, c));
                }
            }
        }
        let (_, pr, pc) = best.ok_or(NetworkError::NoValidChoice)?;
        let pivot = work[(pr, pc)].clone();
        for r in (0..l).filter(|&r| r != pr && !used_rows[r]) {
            let factor = &work[(r, pc)] / &pivot;
            if factor.is_zero() {
                continue;
            }
            for c in 0..n {
                let v = &factor * &work[(pr, c)];
                work[(r, c)] -= v;
            }
        }
        used_rows[pr] = true;
        chosen.push(pc);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// A network expressed over its independent species.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub network: ReactionNetwork,
    pub invariants: Invariants,
    /// Species indices treated as independent, ascending.
    pub independent: Vec<usize>,
    /// Species indices treated as dependent, ascending.
    pub dependent: Vec<usize>,
    /// `B~^{-1} f`.
    pub alpha: Vec<Rational>,
    /// `B~^{-1} B^`, `L x N^`.
    pub beta: RationalMatrix,
    pub reduced_stoichiometry: Vec<Vec<i64>>,
    /// Combinatorial part of each propensity; the full propensity is `rate * poly`.
    pub propensity_polys: Vec<Polynomial>,
    pub rates: Vec<f64>,
    pub orders: Vec<u32>,
}

/// Affine function `c0 + w . x^` of the independent counts.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFunctional {
    pub constant: f64,
    pub weights: Vec<f64>,
}

impl LinearFunctional {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

pub fn reduce(
    network: &ReactionNetwork,
    independent_choice: Option<&[usize]>,
) -> Result<ReducedModel, NetworkError> {
    let n = network.n_species();
    let s = stoichiometry(network);
    let supports: Vec<Vec<i64>> = network.initial.iter().map(|(x, _)| x.clone()).collect();
    let inv = invariants(&s, &supports)?;
    let l = inv.count();

    let dependent = match independent_choice {
        Some(ind) => {
            let mut ind = ind.to_vec();
            ind.sort_unstable();
            ind.dedup();
            if ind.iter().any(|&i| i >= n) {
                return Err(NetworkError::BadChoice("species index out of range".into()));
            }
            if ind.len() != n - l {
                return Err(NetworkError::BadChoice(format!(
                    "expected {} independent species, got {}",
                    n - l,
                    ind.len()
                )));
            }
            (0..n).filter(|i| !ind.contains(i)).collect()
        }
        None => greedy_dependent(&inv.b)?,
    };
    let independent: Vec<usize> = (0..n).filter(|i| !dependent.contains(i)).collect();
    let n_hat = independent.len();

    let (alpha, beta) = if l == 0 {
        (Vec::new(), RationalMatrix::zeros(0, n_hat))
    } else {
        let b_dep = inv.b.select_columns(&dependent);
        let b_ind = inv.b.select_columns(&independent);
        let b_dep_inv = b_dep.inverse().ok_or(NetworkError::SingularChoice)?;
        (b_dep_inv.mul_vec(&inv.f), b_dep_inv.mul(&b_ind))
    };

    // each full count as a polynomial in the independent counts
    let mut count_polys: Vec<Polynomial> = vec![Polynomial::zero(n_hat); n];
    for (k, &i) in independent.iter().enumerate() {
        count_polys[i] = Polynomial::var(n_hat, k);
    }
    for (k, &i) in dependent.iter().enumerate() {
        let weights: Vec<Rational> = (0..n_hat).map(|j| -beta[(k, j)].clone()).collect();
        count_polys[i] = Polynomial::affine(alpha[k].clone(), &weights);
    }

    let mut propensity_polys = Vec::with_capacity(network.reactions.len());
    for rxn in &network.reactions {
        let mut p = Polynomial::one(n_hat);
        for (i, &nu) in rxn.reactants.iter().enumerate() {
            for k in 0..nu {
                let factor = count_polys[i]
                    .sub(&Polynomial::constant(n_hat, rat(i64::from(k))))
                    .scale(&Rational::new(BigInt::one(), BigInt::from(k + 1)));
                p = p.mul(&factor);
            }
        }
        propensity_polys.push(p);
    }

    let reduced_stoichiometry = s
        .columns
        .iter()
        .map(|col| independent.iter().map(|&i| col[i]).collect())
        .collect();

    Ok(ReducedModel {
        network: network.clone(),
        invariants: inv,
        independent,
        dependent,
        alpha,
        beta,
        reduced_stoichiometry,
        propensity_polys,
        rates: network.reactions.iter().map(|r| r.rate).collect(),
        orders: network.reactions.iter().map(Reaction::order).collect(),
    })
}

impl ReducedModel {
    pub fn n_independent(&self) -> usize {
        self.independent.len()
    }

    pub fn n_dependent(&self) -> usize {
        self.dependent.len()
    }

    pub fn max_order(&self) -> u32 {
        self.orders.iter().copied().max().unwrap_or(0)
    }

    pub fn species_names(&self) -> &[String] {
        &self.network.species
    }

    pub fn reduce_state(&self, x: &[i64]) -> Vec<i64> {
        self.independent.iter().map(|&i| x[i]).collect()
    }

    /// Reconstructs the full state from independent counts; `None` if a
    /// dependent count is not an integer.
    pub fn full_state(&self, x_hat: &[i64]) -> Option<Vec<i64>> {
        let mut x = vec![0i64; self.network.n_species()];
        for (k, &i) in self.independent.iter().enumerate() {
            x[i] = x_hat[k];
        }
        for (k, &i) in self.dependent.iter().enumerate() {
            let mut v = self.alpha[k].clone();
            for (j, &xj) in x_hat.iter().enumerate() {
                v -= &self.beta[(k, j)] * rat(xj);
            }
            if !v.is_integer() {
                return None;
            }
            x[i] = v.to_integer().to_i64()?;
        }
        Some(x)
    }

    /// Propensity of reaction `r` at a reduced state via the reduced polynomial.
    pub fn reduced_propensity(&self, r: usize, x_hat: &[i64]) -> f64 {
        self.rates[r] * to_f64(&self.propensity_polys[r].eval_i64(x_hat))
    }

    /// Whether a real point satisfies `x^ >= 0` and `alpha - beta x^ >= 0`.
    pub fn in_polyhedron(&self, x_hat: &[i64]) -> bool {
        if x_hat.iter().any(|&v| v < 0) {
            return false;
        }
        (0..self.n_dependent()).all(|k| {
            let mut v = self.alpha[k].clone();
            for (j, &xj) in x_hat.iter().enumerate() {
                v -= &self.beta[(k, j)] * rat(xj);
            }
            !v.is_negative()
        })
    }

    /// Degree-one polynomial `alpha_k - sum_j beta_kj x_j` for dependent slot `k`.
    pub fn dependent_polynomial(&self, k: usize) -> Polynomial {
        let w: Vec<Rational> = (0..self.n_independent())
            .map(|j| -self.beta[(k, j)].clone())
            .collect();
        Polynomial::affine(self.alpha[k].clone(), &w)
    }

    /// The count of a species as an affine function of the independent counts.
    pub fn species_functional(&self, name: &str) -> Result<LinearFunctional, NetworkError> {
        let i = self.network.species_index(name)?;
        let n_hat = self.n_independent();
        if let Some(k) = self.independent.iter().position(|&s| s == i) {
            let mut weights = vec![0.0; n_hat];
            weights[k] = 1.0;
            return Ok(LinearFunctional {
                constant: 0.0,
                weights,
            });
        }
        let k = self.dependent.iter().position(|&s| s == i).expect("partition");
        Ok(LinearFunctional {
            constant: to_f64(&self.alpha[k]),
            weights: (0..n_hat).map(|j| -to_f64(&self.beta[(k, j)])).collect(),
        })
    }

    /// Initial support mapped to reduced states.
    pub fn initial_reduced(&self) -> Vec<(Vec<i64>, f64)> {
        self.network
            .initial
            .iter()
            .map(|(x, p)| (self.reduce_state(x), *p))
            .collect()
    }
}

impl fmt::Display for ReducedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |idx: &[usize]| {
            idx.iter()
                .map(|&i| self.network.species[i].as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "independent [{}], dependent [{}]",
            names(&self.independent),
            names(&self.dependent)
        )
    }
}

fn syntax(line: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Syntax {
        line,
        message: message.into(),
    }
}

fn is_name(tok: &str) -> bool {
    let mut chars = tok.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
}

/// Parses one side of a reaction (`2 A + B`, `2A`, or `0`).
fn parse_side(
    text: &str,
    line: usize,
    index: &HashMap<&str, usize>,
    n: usize,
) -> Result<Vec<u32>, NetworkError> {
    let mut coeffs = vec![0u32; n];
    let text = text.trim();
    if text == "0" || text == "∅" {
        return Ok(coeffs);
    }
    for term in text.split('+') {
        let toks: Vec<&str> = term.split_whitespace().collect();
        let (k, name) = match toks.as_slice() {
            [k, name] => (
                k.parse::<u32>()
                    .map_err(|_| syntax(line, format!("bad coefficient `{k}`")))?,
                *name,
            ),
            [single] => {
                let digits: String = single.chars().take_while(char::is_ascii_digit).collect();
                if digits.is_empty() {
                    (1, *single)
                } else {
                    (digits.parse().unwrap(), &single[digits.len()..])
                }
            }
            _ => return Err(syntax(line, format!("cannot parse term `{}`", term.trim()))),
        };
        if !is_name(name) {
            return Err(syntax(line, format!("bad species name `{name}`")));
        }
        let i = *index
            .get(name)
            .ok_or_else(|| NetworkError::UnknownSpecies(name.to_string()))?;
        coeffs[i] += k;
    }
    Ok(coeffs)
}

fn parse_assignments(
    toks: &[&str],
    line: usize,
    index: &HashMap<&str, usize>,
    n: usize,
) -> Result<Vec<i64>, NetworkError> {
    let mut x = vec![0i64; n];
    for tok in toks {
        let (name, val) = tok
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected name=count, got `{tok}`")))?;
        let i = *index
            .get(name)
            .ok_or_else(|| NetworkError::UnknownSpecies(name.to_string()))?;
        x[i] = val
            .parse::<u32>()
            .map_err(|_| syntax(line, format!("bad count `{val}`")))?
            .into();
    }
    Ok(x)
}

/// Parses the line-oriented network format.
///
/// ```text
/// species A B C
/// rxn A + B -> C : 1.0
/// init A=3 B=4
/// ```
///
/// Instead of `init`, one or more `initp <p> : A=.. B=..` lines give a
/// distribution over initial states. `#` starts a comment.
pub fn parse_network(text: &str) -> Result<ReactionNetwork, NetworkError> {
    let mut species: Vec<String> = Vec::new();
    let mut reactions = Vec::new();
    let mut dirac: Option<Vec<i64>> = None;
    let mut mixed: Vec<(Vec<i64>, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content
            .split_once(char::is_whitespace)
            .unwrap_or((content, ""));
        let index: HashMap<&str, usize> = species
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let n = species.len();
        match keyword {
            "species" => {
                if !species.is_empty() {
                    return Err(syntax(line, "species declared twice"));
                }
                for name in rest.split_whitespace() {
                    if !is_name(name) {
                        return Err(syntax(line, format!("bad species name `{name}`")));
                    }
                    if species.iter().any(|s| s == name) {
                        return Err(syntax(line, format!("duplicate species `{name}`")));
                    }
                    species.push(name.to_string());
                }
                if species.is_empty() {
                    return Err(syntax(line, "no species declared"));
                }
            }
            "rxn" => {
                if species.is_empty() {
                    return Err(syntax(line, "reaction before species declaration"));
                }
                let (eqn, rate) = rest
                    .rsplit_once(':')
                    .ok_or_else(|| syntax(line, "missing `: rate`"))?;
                let (lhs, rhs) = eqn
                    .split_once("->")
                    .ok_or_else(|| syntax(line, "missing `->`"))?;
                let rate: f64 = rate
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, format!("bad rate `{}`", rate.trim())))?;
                let reactants = parse_side(lhs, line, &index, n)?;
                let products = parse_side(rhs, line, &index, n)?;
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(NetworkError::NonPositiveRate {
                        reaction: reactions.len(),
                        rate,
                    });
                }
                reactions.push(Reaction {
                    reactants,
                    products,
                    rate,
                });
            }
            "init" => {
                if dirac.is_some() || !mixed.is_empty() {
                    return Err(syntax(line, "initial state given twice"));
                }
                let toks: Vec<&str> = rest.split_whitespace().collect();
                dirac = Some(parse_assignments(&toks, line, &index, n)?);
            }
            "initp" => {
                if dirac.is_some() {
                    return Err(syntax(line, "`initp` mixed with `init`"));
                }
                let (p, assign) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax(line, "expected `initp <p> : name=count ...`"))?;
                let p: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, format!("bad probability `{}`", p.trim())))?;
                if !(p.is_finite() && p > 0.0) {
                    return Err(NetworkError::BadProbability(format!(
                        "line {line}: probability must be positive, got {p}"
                    )));
                }
                let toks: Vec<&str> = assign.split_whitespace().collect();
                mixed.push((parse_assignments(&toks, line, &index, n)?, p));
            }
            other => return Err(syntax(line, format!("unknown keyword `{other}`"))),
        }
    }

    if species.is_empty() {
        return Err(syntax(0, "no species declared"));
    }
    if reactions.is_empty() {
        return Err(syntax(0, "no reactions declared"));
    }
    let initial = match dirac {
        Some(x) => vec![(x, 1.0)],
        None if mixed.is_empty() => return Err(syntax(0, "no initial state given")),
        None => {
            let total: f64 = mixed.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(NetworkError::BadProbability(format!(
                    "probabilities sum to {total}"
                )));
            }
            mixed
        }
    };
    Ok(ReactionNetwork {
        species,
        reactions,
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn det_abs(b: &RationalMatrix, cols: &[usize]) -> Rational {
        b.select_columns(cols).determinant().abs()
    }

    #[test]
    fn parses_toy_system() {
        let net = parse_network("species A B C\nrxn A + B -> C : 1.0\ninit A=3 B=4 C=0\n").unwrap();
        assert_eq!(net.n_species(), 3);
        assert_eq!(net.reactions.len(), 1);
        assert_eq!(stoichiometry(&net).column(0), &[-1, -1, 1]);
        assert_eq!(net.initial, vec![(vec![3, 4, 0], 1.0)]);
    }

    #[test]
    fn zero_net_reaction_is_valid() {
        let net = parse_network("species A\nrxn A -> A : 1.0\ninit A=0").unwrap();
        assert_eq!(stoichiometry(&net).column(0), &[0]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_network("species A\nrxn A + B -> A : 1.0\ninit A=1"),
            Err(NetworkError::UnknownSpecies("B".into()))
        );
        assert!(matches!(
            parse_network("species A\nrxn A -> 0 : -1\ninit A=1"),
            Err(NetworkError::NonPositiveRate { .. })
        ));
        assert!(matches!(
            parse_network("species A\nrxn A -> 0 : 1\ninitp 0.5 : A=1\ninitp 0.4 : A=2"),
            Err(NetworkError::BadProbability(_))
        ));
        assert!(matches!(
            parse_network("species A\nrxn A => 0 : 1\ninit A=1"),
            Err(NetworkError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn coefficients_and_empty_sides() {
        let net = parse_network("species A B\nrxn 2 A -> B : 0.5\nrxn 0 -> 3B : 2\ninit A=2").unwrap();
        assert_eq!(net.reactions[0].reactants, vec![2, 0]);
        assert_eq!(net.reactions[1].products, vec![0, 3]);
        assert_eq!(net.max_order(), 2);
        // 2A: c * x(x-1)/2
        assert_eq!(net.reactions[0].propensity(&[4, 0]), 0.5 * 6.0);
    }

    #[test]
    fn stoichiometry_of_fixtures() {
        let rev = fixtures::reversible();
        let s = stoichiometry(&rev);
        assert_eq!(s.columns, vec![vec![-1, -1, 1, 0], vec![0, 0, -1, 1], vec![0, 0, 1, -1]]);
        let chain = fixtures::chain();
        assert_eq!(stoichiometry(&chain).columns, vec![vec![-1, 1, 0], vec![0, -1, 1]]);
    }

    #[test]
    fn invariants_span_left_nullspace() {
        for net in fixtures::all() {
            let s = stoichiometry(&net);
            let supp: Vec<Vec<i64>> = net.initial.iter().map(|(x, _)| x.clone()).collect();
            let inv = invariants(&s, &supp).unwrap();
            assert!(inv.b.mul(&s.to_rational()).is_zero());
            let rank_s = s.to_rational().rank();
            assert_eq!(inv.count(), net.n_species() - rank_s);
            assert_eq!(inv.b.rank(), inv.count());
        }
    }

    #[test]
    fn toy_invariants_and_chain_total() {
        let toy = fixtures::toy();
        let s = stoichiometry(&toy);
        let inv = invariants(&s, &[vec![3, 4, 0]]).unwrap();
        assert_eq!(inv.count(), 2);
        let chain = fixtures::chain();
        let inv = invariants(&stoichiometry(&chain), &[vec![4, 0, 0]]).unwrap();
        assert_eq!(inv.b.row(0), &[rat(1), rat(1), rat(1)]);
        assert_eq!(inv.f, vec![rat(4)]);
    }

    #[test]
    fn full_rank_stoichiometry_has_no_invariants() {
        let net = parse_network("species A B\nrxn 0 -> A : 1\nrxn 0 -> B : 1\ninit A=0").unwrap();
        let inv = invariants(&stoichiometry(&net), &[vec![0, 0]]).unwrap();
        assert_eq!(inv.count(), 0);
        assert!(inv.f.is_empty());
        let red = reduce(&net, None).unwrap();
        assert_eq!(red.independent, vec![0, 1]);
    }

    #[test]
    fn inconsistent_initial_support() {
        let err = parse_network("species A B\nrxn A -> B : 1\ninitp 0.5 : A=1\ninitp 0.5 : A=2")
            .and_then(|n| reduce(&n, None));
        assert_eq!(err.unwrap_err(), NetworkError::InconsistentInvariants);
    }

    #[test]
    fn toy_reduction() {
        let red = reduce(&fixtures::toy(), None).unwrap();
        assert_eq!(red.independent, vec![0]);
        // x_B = x_A + 1, x_C = 3 - x_A
        assert_eq!(red.full_state(&[2]), Some(vec![2, 3, 1]));
        let x = Polynomial::var(1, 0);
        let expected = x.mul(&x.add(&Polynomial::one(1)));
        assert_eq!(red.propensity_polys[0], expected);
        assert_eq!(red.propensity_polys[0].degree(), 2);
    }

    #[test]
    fn chain_reduction() {
        let red = reduce(&fixtures::chain(), None).unwrap();
        assert_eq!(red.independent, vec![0, 1]);
        assert_eq!(red.reduced_stoichiometry, vec![vec![-1, 1], vec![0, -1]]);
        assert_eq!(red.propensity_polys[0], Polynomial::var(2, 0));
        assert_eq!(red.propensity_polys[1], Polynomial::var(2, 1));
    }

    #[test]
    fn reversible_reduction() {
        let red = reduce(&fixtures::reversible(), None).unwrap();
        assert_eq!(red.independent, vec![0, 2]);
        assert_eq!(red.dependent, vec![1, 3]);
        // x_B = x_A + 1, x_D = 3 - x_A - x_C
        assert_eq!(red.full_state(&[1, 1]), Some(vec![1, 2, 1, 1]));
        for x in 0..=3 {
            for c in 0..=3 - x {
                let xh = [x, c];
                let a1 = red.reduced_propensity(0, &xh);
                let a2 = red.reduced_propensity(1, &xh);
                let a3 = red.reduced_propensity(2, &xh);
                assert!((a1 - (x * (x + 1)) as f64).abs() < 1e-12);
                assert!((a2 - 2.1 * c as f64).abs() < 1e-12);
                assert!((a3 - 0.3 * (3 - x - c) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn explicit_choice_and_singular_choice() {
        let net = fixtures::reversible();
        // independent {A, B} leaves dependent {C, D}, which is singular
        assert_eq!(
            reduce(&net, Some(&[0, 1])).unwrap_err(),
            NetworkError::SingularChoice
        );
        let red = reduce(&net, Some(&[1, 3])).unwrap();
        assert_eq!(red.dependent, vec![0, 2]);
        assert!(matches!(
            reduce(&net, Some(&[0])),
            Err(NetworkError::BadChoice(_))
        ));
    }

    #[test]
    fn greedy_choice_is_maximal_determinant() {
        for net in fixtures::all() {
            let red = reduce(&net, None).unwrap();
            let b = &red.invariants.b;
            let chosen = det_abs(b, &red.dependent);
            assert!(!chosen.is_zero());
            // every L-subset has |det| <= chosen for these unimodular fixtures
            let n = net.n_species();
            let l = b.rows();
            if l == 2 {
                for i in 0..n {
                    for j in i + 1..n {
                        assert!(det_abs(b, &[i, j]) <= chosen);
                    }
                }
            }
        }
    }

    #[test]
    fn functional_for_dependent_species() {
        let red = reduce(&fixtures::toy(), None).unwrap();
        let c = red.species_functional("C").unwrap();
        assert_eq!(c.constant, 3.0);
        assert_eq!(c.weights, vec![-1.0]);
        assert!(red.species_functional("Z").is_err());
    }
}
