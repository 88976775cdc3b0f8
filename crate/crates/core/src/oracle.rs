//! Brute-force ground truth for small systems: reachable-state enumeration,
//! the CME generator, transient solution by uniformization, generator
//! eigenvalues, Gillespie simulation and weighted moment integrals.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::MomentBasis;
use crate::network::ReducedModel;
use crate::trajectory::fmt_value;

pub const DEFAULT_STATE_CAP: usize = 100_000;
pub const DENSE_EIGEN_CAP: usize = 3000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("more than {cap} reachable states")]
    StateCapExceeded { cap: usize },
    #[error("{states} states exceed the dense eigensolver limit of {max}")]
    TooLargeForDense { states: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Reachable states in breadth-first discovery order.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub reduced: Vec<Vec<i64>>,
    pub full: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.reduced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reduced.is_empty()
    }

    pub fn index_of(&self, x_hat: &[i64]) -> Option<usize> {
        self.index.get(x_hat).copied()
    }
}

pub fn enumerate_states(reduced: &ReducedModel, cap: usize) -> Result<StateSpace, OracleError> {
    if cap == 0 {
        return Err(OracleError::InvalidArgument("state cap must be >= 1".into()));
    }
    let net = &reduced.network;
    let changes: Vec<Vec<i64>> = net.reactions.iter().map(|r| r.net_change()).collect();
    let mut space = StateSpace {
        reduced: Vec::new(),
        full: Vec::new(),
        index: HashMap::new(),
    };
    let mut queue = VecDeque::new();
    let visit = |x: Vec<i64>, space: &mut StateSpace, queue: &mut VecDeque<usize>| {
        let xh = reduced.reduce_state(&x);
        if space.index.contains_key(&xh) {
            return Ok(());
        }
        if space.len() == cap {
            return Err(OracleError::StateCapExceeded { cap });
        }
        space.index.insert(xh.clone(), space.len());
        queue.push_back(space.len());
        space.reduced.push(xh);
        space.full.push(x);
        Ok(())
    };
    for (x, _) in &net.initial {
        visit(x.clone(), &mut space, &mut queue)?;
    }
    while let Some(i) = queue.pop_front() {
        let x = space.full[i].clone();
        for (rxn, change) in net.reactions.iter().zip(&changes) {
            if rxn.propensity(&x) <= 0.0 {
                continue;
            }
            let y: Vec<i64> = x.iter().zip(change).map(|(a, d)| a + d).collect();
            visit(y, &mut space, &mut queue)?;
        }
    }
    Ok(space)
}

/// CME generator `G`, stored by columns: `G[y, x]` is the rate from `x` to `y`.
#[derive(Clone, Debug)]
pub struct Generator {
    pub off_diagonal: Vec<Vec<(usize, f64)>>,
    pub diagonal: Vec<f64>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diagonal.iter().zip(p).map(|(d, v)| d * v).collect();
        for (x, col) in self.off_diagonal.iter().enumerate() {
            for &(y, rate) in col {
                out[y] += rate * p[x];
            }
        }
        out
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |m, d| m.max(-d))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for x in 0..n {
            g[(x, x)] = self.diagonal[x];
            for &(y, rate) in &self.off_diagonal[x] {
                g[(y, x)] += rate;
            }
        }
        g
    }
}

pub fn build_generator(reduced: &ReducedModel, space: &StateSpace) -> Generator {
    let net = &reduced.network;
    let n = space.len();
    let mut off_diagonal = vec![Vec::new(); n];
    let mut diagonal = vec![0.0; n];
    for x in 0..n {
        let full = &space.full[x];
        let mut col: Vec<(usize, f64)> = Vec::new();
        for (r, rxn) in net.reactions.iter().enumerate() {
            let a = rxn.propensity(full);
            let shift = &reduced.reduced_stoichiometry[r];
            if a <= 0.0 || shift.iter().all(|&s| s == 0) {
                continue;
            }
            let yh: Vec<i64> = space.reduced[x].iter().zip(shift).map(|(v, s)| v + s).collect();
            let y = space.index_of(&yh).expect("state space closed under reactions");
            diagonal[x] -= a;
            match col.iter_mut().find(|(t, _)| *t == y) {
                Some((_, v)) => *v += a,
                None => col.push((y, a)),
            }
        }
        off_diagonal[x] = col;
    }
    Generator {
        off_diagonal,
        diagonal,
    }
}

const POISSON_TAIL: f64 = 1e-13;

/// `exp(G h) p` by uniformization.
pub fn uniformized_step(gen: &Generator, p: &[f64], h: f64) -> Vec<f64> {
    let rate = gen.max_exit_rate();
    if h <= 0.0 || rate == 0.0 {
        return p.to_vec();
    }
    let q = rate * h;
    let ln_q = q.ln();
    let k_max = (q + 20.0 * q.sqrt() + 100.0).ceil() as usize;
    let mut v = p.to_vec();
    let mut acc = vec![0.0; p.len()];
    let mut log_w = -q;
    let mut mass = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            log_w += ln_q - (k as f64).ln();
            let gv = gen.apply(&v);
            for (vi, gi) in v.iter_mut().zip(&gv) {
                *vi += gi / rate;
            }
        }
        let w = log_w.exp();
        mass += w;
        for (a, vi) in acc.iter_mut().zip(&v) {
            *a += w * vi;
        }
        if k as f64 > q && 1.0 - mass < POISSON_TAIL {
            break;
        }
    }
    acc
}

/// Distributions at each requested time (nondecreasing, `>= 0`).
pub fn transient(gen: &Generator, p0: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut p = p0.to_vec();
    let mut t_prev = 0.0;
    for &t in times {
        assert!(t >= t_prev, "times must be nondecreasing and nonnegative");
        p = uniformized_step(gen, &p, t - t_prev);
        t_prev = t;
        out.push(p.clone());
    }
    out
}

#[derive(Clone, Debug)]
pub struct CmeSolution {
    pub times: Vec<f64>,
    pub probabilities: Vec<Vec<f64>>,
    pub basis: MomentBasis,
    /// Moments of the reduced state, laid out like `basis`.
    pub moments: Vec<Vec<f64>>,
    /// Per time, per species (full network order).
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl CmeSolution {
    /// `t,species,mean,variance`.
    pub fn to_csv(&self, species: &[String]) -> String {
        let mut out = String::from("t,species,mean,variance\n");
        for (k, t) in self.times.iter().enumerate() {
            for (i, name) in species.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{name},{},{}",
                    fmt_value(*t),
                    fmt_value(self.means[k][i]),
                    fmt_value(self.variances[k][i])
                );
            }
        }
        out
    }
}

/// Ground-truth model bundle for one reduced network.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub reduced: ReducedModel,
    pub space: StateSpace,
    pub generator: Generator,
    pub p0: Vec<f64>,
}

impl Oracle {
    pub fn new(reduced: &ReducedModel, cap: usize) -> Result<Self, OracleError> {
        let space = enumerate_states(reduced, cap)?;
        let generator = build_generator(reduced, &space);
        let mut p0 = vec![0.0; space.len()];
        for (xh, p) in reduced.initial_reduced() {
            p0[space.index_of(&xh).expect("initial state enumerated")] += p;
        }
        Ok(Self {
            reduced: reduced.clone(),
            space,
            generator,
            p0,
        })
    }

    pub fn distribution_at(&self, t: f64) -> Vec<f64> {
        uniformized_step(&self.generator, &self.p0, t)
    }

    pub fn moments_of(&self, p: &[f64], basis: &MomentBasis) -> Vec<f64> {
        basis.moments_of(self.space.reduced.iter().map(Vec::as_slice).zip(p.iter().copied()))
    }

    pub fn moments_at(&self, t: f64, basis: &MomentBasis) -> Vec<f64> {
        self.moments_of(&self.distribution_at(t), basis)
    }

    fn species_stats(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.reduced.network.n_species();
        let mut m1 = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        for (x, &w) in self.space.full.iter().zip(p) {
            for i in 0..n {
                let v = x[i] as f64;
                m1[i] += w * v;
                m2[i] += w * v * v;
            }
        }
        let var = m1.iter().zip(&m2).map(|(a, b)| (b - a * a).max(0.0)).collect();
        (m1, var)
    }

    pub fn solve(&self, times: &[f64], moment_order: u32) -> CmeSolution {
        let basis = MomentBasis::graded(self.reduced.n_independent(), moment_order);
        let probabilities = transient(&self.generator, &self.p0, times);
        let moments = probabilities.iter().map(|p| self.moments_of(p, &basis)).collect();
        let (means, variances) = probabilities.iter().map(|p| self.species_stats(p)).unzip();
        CmeSolution {
            times: times.to_vec(),
            probabilities,
            basis,
            moments,
            means,
            variances,
        }
    }

    pub fn eigenvalues(&self, k: usize) -> Result<Vec<Complex<f64>>, OracleError> {
        eigenvalues(&self.generator, k)
    }

    /// `int_0^T e^{rho (T - t)} mu(t) dt` by adaptive quadrature.
    pub fn z_quadrature(&self, rho: f64, time: f64, basis: &MomentBasis, tol: f64) -> Vec<f64> {
        z_quadrature(|t| self.moments_at(t, basis), rho, time, tol)
    }
}

const EIGEN_DEDUP: f64 = 1e-6;

/// The `k` smallest-magnitude distinct eigenvalues of the generator.
pub fn eigenvalues(gen: &Generator, k: usize) -> Result<Vec<Complex<f64>>, OracleError> {
    let n = gen.len();
    if n > DENSE_EIGEN_CAP {
        return Err(OracleError::TooLargeForDense {
            states: n,
            max: DENSE_EIGEN_CAP,
        });
    }
    let scale = gen.max_exit_rate().max(1.0);
    let mut all: Vec<Complex<f64>> = gen
        .to_dense()
        .complex_eigenvalues()
        .iter()
        .map(|&z| if z.norm() < 1e-10 * scale { Complex::new(0.0, 0.0) } else { z })
        .collect();
    all.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    let mut distinct: Vec<Complex<f64>> = Vec::new();
    for z in all {
        if !distinct
            .iter()
            .any(|d| (d - z).norm() <= EIGEN_DEDUP * (1.0 + z.norm()))
        {
            distinct.push(z);
        }
        if distinct.len() == k {
            break;
        }
    }
    Ok(distinct)
}

/// Real parts of eigenvalues, deduplicated to `1e-6`, always including 0.
pub fn suggested_rho(eigs: &[Complex<f64>]) -> Vec<f64> {
    let mut out = vec![0.0];
    for z in eigs {
        if !out.iter().any(|&r: &f64| (r - z.re).abs() <= 1e-6) {
            out.push(z.re);
        }
    }
    out
}

fn simpson(f0: &[f64], fm: &[f64], f1: &[f64], h: f64) -> Vec<f64> {
    f0.iter()
        .zip(fm)
        .zip(f1)
        .map(|((a, b), c)| h / 6.0 * (a + 4.0 * b + c))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> Vec<f64>>(
    f: &F,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: u32,
) -> Vec<f64> {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(fa, &flm, fm, m - a);
    let right = simpson(fm, &frm, fb, b - m);
    let err = left
        .iter()
        .zip(&right)
        .zip(whole)
        .map(|((l, r), w)| (l + r - w).abs())
        .fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol {
        return left
            .iter()
            .zip(&right)
            .zip(whole)
            .map(|((l, r), w)| l + r + (l + r - w) / 15.0)
            .collect();
    }
    let mut l = adaptive_simpson(f, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1);
    let r = adaptive_simpson(f, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1);
    for (li, ri) in l.iter_mut().zip(r) {
        *li += ri;
    }
    l
}

/// `int_0^T e^{rho (T - t)} mu(t) dt` for a vector-valued moment trajectory.
pub fn z_quadrature<F: Fn(f64) -> Vec<f64>>(moments: F, rho: f64, time: f64, tol: f64) -> Vec<f64> {
    let integrand = |t: f64| -> Vec<f64> {
        let w = (rho * (time - t)).exp();
        moments(t).into_iter().map(|v| w * v).collect()
    };
    let f0 = integrand(0.0);
    if time <= 0.0 {
        return vec![0.0; f0.len()];
    }
    // fixed first split so that smooth but non-polynomial integrands are not accepted too early
    let pieces = 8;
    let h = time / pieces as f64;
    let mut total = vec![0.0; f0.len()];
    let mut fa = f0;
    for k in 0..pieces {
        let a = k as f64 * h;
        let b = if k + 1 == pieces { time } else { a + h };
        let fm = integrand(0.5 * (a + b));
        let fb = integrand(b);
        let whole = simpson(&fa, &fm, &fb, b - a);
        let part = adaptive_simpson(&integrand, a, b, &fa, &fm, &fb, &whole, tol / pieces as f64, 30);
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
        fa = fb;
    }
    total
}

/// Ensemble statistics from Gillespie paths.
#[derive(Clone, Debug)]
pub struct SsaSummary {
    pub times: Vec<f64>,
    pub paths: usize,
    /// Per time, per species.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub mean_se: Vec<Vec<f64>>,
    pub variance_se: Vec<Vec<f64>>,
}

impl SsaSummary {
    /// `t,species,mean,variance,mean_se,variance_se`.
    pub fn to_csv(&self, species: &[String]) -> String {
        let mut out = String::from("t,species,mean,variance,mean_se,variance_se\n");
        for (k, t) in self.times.iter().enumerate() {
            for (i, name) in species.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{name},{},{},{},{}",
                    fmt_value(*t),
                    fmt_value(self.means[k][i]),
                    fmt_value(self.variances[k][i]),
                    fmt_value(self.mean_se[k][i]),
                    fmt_value(self.variance_se[k][i])
                );
            }
        }
        out
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn sample_initial(reduced: &ReducedModel, rng: &mut impl Rng) -> Vec<i64> {
    let init = &reduced.network.initial;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (x, p) in init {
        acc += p;
        if u < acc {
            return x.clone();
        }
    }
    init.last().expect("nonempty initial support").0.clone()
}

/// One Gillespie direct-method path up to `t_end`: the initial state and the
/// state after every event, with event times.
pub fn ssa_path(reduced: &ReducedModel, seed: u64, path: u64, t_end: f64) -> Vec<(f64, Vec<i64>)> {
    let mut rng = path_rng(seed, path);
    let net = &reduced.network;
    let changes: Vec<Vec<i64>> = net.reactions.iter().map(|r| r.net_change()).collect();
    let mut x = sample_initial(reduced, &mut rng);
    let mut t = 0.0;
    let mut events = vec![(0.0, x.clone())];
    let mut props = vec![0.0; net.reactions.len()];
    loop {
        for (a, rxn) in props.iter_mut().zip(&net.reactions) {
            *a = rxn.propensity(&x);
        }
        let total: f64 = props.iter().sum();
        if total <= 0.0 {
            break;
        }
        let u: f64 = 1.0 - rng.gen::<f64>();
        t += -u.ln() / total;
        if t > t_end {
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = props.len() - 1;
        for (r, a) in props.iter().enumerate() {
            acc += a;
            if target < acc && *a > 0.0 {
                chosen = r;
                break;
            }
        }
        for (xi, d) in x.iter_mut().zip(&changes[chosen]) {
            *xi += d;
        }
        events.push((t, x.clone()));
    }
    events
}

/// States of one path at each grid time.
fn sample_path(reduced: &ReducedModel, seed: u64, path: u64, times: &[f64]) -> Vec<Vec<i64>> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let events = ssa_path(reduced, seed, path, t_end);
    let mut out = Vec::with_capacity(times.len());
    let mut e = 0;
    for &t in times {
        while e + 1 < events.len() && events[e + 1].0 <= t {
            e += 1;
        }
        out.push(events[e].1.clone());
    }
    out
}

const SSA_CHUNK: usize = 1024;

/// Gillespie ensemble with one ChaCha stream per path; deterministic in `seed`.
pub fn ssa_simulate(
    reduced: &ReducedModel,
    times: &[f64],
    paths: usize,
    seed: u64,
) -> Result<SsaSummary, OracleError> {
    if paths == 0 {
        return Err(OracleError::InvalidArgument("paths must be >= 1".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(OracleError::InvalidArgument("times must be nondecreasing and >= 0".into()));
    }
    let n = reduced.network.n_species();
    let nt = times.len();
    // exact integer power sums per (time, species): sum x, x^2, x^3, x^4
    let chunks: Vec<Vec<[i128; 4]>> = (0..paths.div_ceil(SSA_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![[0i128; 4]; nt * n];
            for p in c * SSA_CHUNK..((c + 1) * SSA_CHUNK).min(paths) {
                for (k, x) in sample_path(reduced, seed, p as u64, times).iter().enumerate() {
                    for (i, &v) in x.iter().enumerate() {
                        let v = i128::from(v);
                        let s = &mut sums[k * n + i];
                        s[0] += v;
                        s[1] += v * v;
                        s[2] += v * v * v;
                        s[3] += v * v * v * v;
                    }
                }
            }
            sums
        })
        .collect();
    let mut totals = vec![[0i128; 4]; nt * n];
    for chunk in &chunks {
        for (t, s) in totals.iter_mut().zip(chunk) {
            for q in 0..4 {
                t[q] += s[q];
            }
        }
    }
    let np = paths as f64;
    let mut means = vec![vec![0.0; n]; nt];
    let mut variances = vec![vec![0.0; n]; nt];
    let mut mean_se = vec![vec![0.0; n]; nt];
    let mut variance_se = vec![vec![0.0; n]; nt];
    for k in 0..nt {
        for i in 0..n {
            let s = totals[k * n + i];
            let [r1, r2, r3, r4] = s.map(|v| v as f64 / np);
            let m = r1;
            let pop_var = (r2 - m * m).max(0.0);
            let var = if paths > 1 { pop_var * np / (np - 1.0) } else { 0.0 };
            let m4 = r4 - 4.0 * m * r3 + 6.0 * m * m * r2 - 3.0 * m.powi(4);
            means[k][i] = m;
            variances[k][i] = var;
            mean_se[k][i] = (var / np).sqrt();
            variance_se[k][i] = ((m4 - pop_var * pop_var).max(0.0) / np).sqrt();
        }
    }
    Ok(SsaSummary {
        times: times.to_vec(),
        paths,
        means,
        variances,
        mean_se,
        variance_se,
    })
}
