//! Acceptance suite: one pass/fail line per criterion, exit code 1 if any fail.
//!
//! Reference values come from the closed-form solution of the toy system
//! (coded below, independent of the library) and from the enumerated CME.

use std::time::Instant;

use kinbound::assembly::{BoundQuery, Sense, Statistic};
use kinbound::dynamics::build_moment_odes;
use kinbound::fixtures;
use kinbound::network::{reduce, ReactionNetwork, ReducedModel};
use kinbound::oracle::{ssa_simulate, Oracle, DEFAULT_STATE_CAP};
use kinbound::solver::ClarabelBackend;
use kinbound::trajectory::{
    attach_oracle, bound_trajectory, to_csv, truth_residuals, BoundOptions, BoundPoint, Target,
};

/// Enclosure slack for bounds against reference statistics.
const ENCLOSE_TOL: f64 = 1e-6;
/// Allowed pointwise gap growth when the exponent set grows.
const TIGHTEN_TOL: f64 = 1e-6;
const C1_RUNTIME_SECS: f64 = 30.0;
const C3_MEAN_C: f64 = 0.5;
const C3_MEAN_D: f64 = 2.5;
const C3_MEAN_TOL: f64 = 0.1;
const C3_VAR_TOL: f64 = 1e-6;
const C5_EIG_TOL: f64 = 1e-3;
const C6_GAP_TOL: f64 = 1e-3;
const C7_T0_TOL: f64 = 1e-8;
const C8_FD_TOL: f64 = 1e-6;
const C9_RESIDUAL_TOL: f64 = 1e-6;

const R_TOY: [f64; 2] = [0.0, -2.0];
const R_TOY_MORE: [f64; 3] = [0.0, -2.0, -6.0];
const R_REV: [f64; 4] = [0.0, -2.0, -2.4, -4.4];
const R_REV_PERTURBED: [f64; 4] = [0.0, -1.9, -2.6, -4.7];
const R_REV_FAR: [f64; 4] = [0.0, -6.0, -12.0, -18.0];
const R_CYCLIC: [f64; 3] = [0.0, -2.1322, -4.1637];
const R_CHAIN: [f64; 3] = [0.0, -1.0, -3.0];

fn grid(end: f64, step: f64) -> Vec<f64> {
    let n = (end / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

fn reduced(net: &ReactionNetwork) -> ReducedModel {
    reduce(net, None).expect("fixture reduces")
}

fn opts(rho: &[f64], n: Option<u32>) -> BoundOptions {
    BoundOptions {
        m: 3,
        n,
        rho: rho.to_vec(),
        ..Default::default()
    }
}

fn targets(species: &[&str], variance: bool) -> Vec<Target> {
    let mut t: Vec<Target> = species.iter().map(|s| Target::mean(s)).collect();
    if variance {
        t.extend(species.iter().map(|s| Target::variance(s)));
    }
    t
}

fn run(red: &ReducedModel, grid: &[f64], targets: &[Target], opts: &BoundOptions) -> Vec<BoundPoint> {
    bound_trajectory(red, grid, targets, opts, &ClarabelBackend).expect("bounds assemble")
}

/// Closed form for A + B -> C with unit rate: a pure death chain in A with
/// rate `x (x + b0 - a0)` out of state `x`, solved as a hypoexponential mixture.
struct ToyAnalytic {
    a0: usize,
    b0: usize,
}

impl ToyAnalytic {
    fn rate(&self, x: usize) -> f64 {
        (x * (x + self.b0 - self.a0)) as f64
    }

    fn prob(&self, x: usize, t: f64) -> f64 {
        if x == self.a0 {
            return (-self.rate(x) * t).exp();
        }
        let prefactor: f64 = (x + 1..=self.a0).map(|k| self.rate(k)).product();
        let sum: f64 = (x..=self.a0)
            .map(|i| {
                let denom: f64 = (x..=self.a0)
                    .filter(|&j| j != i)
                    .map(|j| self.rate(j) - self.rate(i))
                    .product();
                (-self.rate(i) * t).exp() / denom
            })
            .sum();
        prefactor * sum
    }

    /// Mean and variance of A; B and C are affine in A.
    fn stats(&self, species: &str, t: f64) -> (f64, f64) {
        let (m1, m2) = (0..=self.a0).fold((0.0, 0.0), |(m1, m2), x| {
            let p = self.prob(x, t);
            (m1 + p * x as f64, m2 + p * (x * x) as f64)
        });
        let var = m2 - m1 * m1;
        let mean = match species {
            "A" => m1,
            "B" => m1 + (self.b0 - self.a0) as f64,
            "C" => self.a0 as f64 - m1,
            _ => unreachable!(),
        };
        (mean, var)
    }
}

/// Worst enclosure violation over all points (positive means a violation).
fn worst_violation(points: &[BoundPoint], truth: impl Fn(&BoundPoint) -> f64) -> (f64, String) {
    let mut worst = (f64::NEG_INFINITY, String::new());
    for p in points {
        let v = truth(p);
        let mut viol = v - p.upper.value;
        if let Some(l) = p.lower {
            viol = viol.max(l.value - v);
        }
        if !p.optimal() || viol.is_nan() {
            viol = f64::INFINITY;
        }
        if viol > worst.0 {
            worst = (
                viol,
                format!("t={} {}:{} status={}", p.t, p.target.statistic_name(), p.target.species, p.status_label()),
            );
        }
    }
    worst
}

fn mean_gap_sum(points: &[BoundPoint]) -> f64 {
    points
        .iter()
        .filter(|p| p.target.statistic == Statistic::Mean)
        .map(BoundPoint::gap)
        .sum()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn toy_points(rho: &[f64]) -> Vec<BoundPoint> {
    let red = reduced(&fixtures::toy());
    run(&red, &grid(2.0, 0.1), &targets(&["A", "B", "C"], true), &opts(rho, Some(2)))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let pts = toy_points(&R_TOY);
    let elapsed = start.elapsed().as_secs_f64();
    let exact = ToyAnalytic { a0: 3, b0: 4 };
    let (viol, at) = worst_violation(&pts, |p| {
        let (mean, var) = exact.stats(&p.target.species, p.t);
        match p.target.statistic {
            Statistic::Mean => mean,
            Statistic::Variance => var,
        }
    });
    outcome(
        viol <= ENCLOSE_TOL && elapsed < C1_RUNTIME_SECS,
        format!("worst violation {viol:.3e} at {at}; {elapsed:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let base = toy_points(&R_TOY);
    let more = toy_points(&R_TOY_MORE);
    let mut worst_growth = f64::NEG_INFINITY;
    for (a, b) in base.iter().zip(&more) {
        if a.target.statistic == Statistic::Mean {
            worst_growth = worst_growth.max(b.gap() - a.gap());
        }
    }
    let (s1, s2) = (mean_gap_sum(&base), mean_gap_sum(&more));
    outcome(
        worst_growth <= TIGHTEN_TOL && s2 < s1,
        format!("max pointwise gap growth {worst_growth:.3e}; summed gap {s1:.6} -> {s2:.6}"),
    )
}

fn reversible_points(rho: &[f64]) -> Vec<BoundPoint> {
    let red = reduced(&fixtures::reversible());
    let oracle = Oracle::new(&red, DEFAULT_STATE_CAP).expect("enumerable");
    let mut pts = run(&red, &grid(3.0, 0.1), &targets(&["B", "C", "D"], true), &opts(rho, None));
    attach_oracle(&mut pts, &oracle);
    pts
}

fn oracle_violation(pts: &[BoundPoint]) -> (f64, String) {
    worst_violation(pts, |p| p.oracle.expect("oracle attached"))
}

fn criterion_3() -> Outcome {
    let pts = reversible_points(&R_REV);
    let (viol, at) = oracle_violation(&pts);
    let red = reduced(&fixtures::reversible());
    let oracle = Oracle::new(&red, DEFAULT_STATE_CAP).expect("enumerable");
    let sol = oracle.solve(&[3.0], 1);
    let (c, d) = (2, 3);
    let (mc, md) = (sol.means[0][c], sol.means[0][d]);
    let (vc, vd) = (sol.variances[0][c], sol.variances[0][d]);
    let long_time = (mc - C3_MEAN_C).abs() <= C3_MEAN_TOL
        && (md - C3_MEAN_D).abs() <= C3_MEAN_TOL
        && (vc - vd).abs() <= C3_VAR_TOL;
    outcome(
        viol <= ENCLOSE_TOL && long_time,
        format!(
            "enclosure: worst violation {viol:.3e} at {at}; oracle at t=3: <C>={mc:.4} <D>={md:.4} var C={vc:.6} var D={vd:.6}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let base = mean_gap_sum(&reversible_points(&R_REV));
    let perturbed = reversible_points(&R_REV_PERTURBED);
    let far = reversible_points(&R_REV_FAR);
    let (v1, at1) = oracle_violation(&perturbed);
    let (v2, at2) = oracle_violation(&far);
    let far_gap = mean_gap_sum(&far);
    outcome(
        v1 <= ENCLOSE_TOL && v2 <= ENCLOSE_TOL && far_gap > base,
        format!(
            "perturbed worst {v1:.3e} ({at1}); far worst {v2:.3e} ({at2}); summed gap {base:.4} vs far {far_gap:.4}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let red = reduced(&fixtures::cyclic());
    let oracle = Oracle::new(&red, DEFAULT_STATE_CAP).expect("enumerable");
    let eigs = oracle.eigenvalues(5).expect("dense");
    let expected = [(0.0, 0.0), (-2.1322, 0.9741), (-2.1322, -0.9741), (-4.1637, 1.5837), (-4.1637, -1.5837)];
    let eig_ok = eigs.len() == expected.len()
        && expected.iter().all(|&(re, im)| {
            eigs.iter()
                .any(|z| (z.re - re).abs() <= C5_EIG_TOL && (z.im - im).abs() <= C5_EIG_TOL)
        });
    let mut pts = run(&red, &grid(2.0, 0.1), &targets(&["A", "B", "C", "D"], false), &opts(&R_CYCLIC, None));
    attach_oracle(&mut pts, &oracle);
    let (viol, at) = oracle_violation(&pts);
    let shown: Vec<String> = eigs.iter().map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();
    outcome(
        eig_ok && viol <= ENCLOSE_TOL,
        format!("eigenvalues [{}]; worst violation {viol:.3e} at {at}", shown.join(", ")),
    )
}

fn criterion_6() -> Outcome {
    let red = reduced(&fixtures::chain());
    let pts = run(&red, &grid(3.0, 0.1), &targets(&["A", "B", "C"], false), &opts(&R_CHAIN, None));
    let worst = pts
        .iter()
        .map(|p| if p.optimal() { p.gap() } else { f64::INFINITY })
        .fold(0.0, f64::max);
    outcome(worst <= C6_GAP_TOL, format!("largest mean gap {worst:.3e}"))
}

fn criterion_7() -> Outcome {
    let red = reduced(&fixtures::reversible_mixed());
    let oracle = Oracle::new(&red, DEFAULT_STATE_CAP).expect("enumerable");
    let mut pts = run(&red, &grid(3.0, 0.1), &targets(&["A", "B", "C", "D"], true), &opts(&R_REV, None));
    attach_oracle(&mut pts, &oracle);
    let (viol, at) = oracle_violation(&pts);
    let mut t0 = 0.0f64;
    for p in pts.iter().filter(|p| p.t == 0.0) {
        let v = p.oracle.unwrap();
        t0 = t0.max((p.upper.value - v).abs());
        if let Some(l) = p.lower {
            t0 = t0.max((l.value - v).abs());
        }
    }
    outcome(
        viol <= ENCLOSE_TOL && t0 <= C7_T0_TOL,
        format!("worst violation {viol:.3e} at {at}; max deviation at t=0 {t0:.3e}"),
    )
}

fn criterion_8() -> Outcome {
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut at = String::new();
    for (name, net) in [
        ("toy", fixtures::toy()),
        ("reversible", fixtures::reversible()),
        ("cyclic", fixtures::cyclic()),
        ("chain", fixtures::chain()),
    ] {
        let red = reduced(&net);
        let dy = build_moment_odes(&red, 3).unwrap();
        let oracle = Oracle::new(&red, DEFAULT_STATE_CAP).unwrap();
        for t in grid(3.0, 0.1).into_iter().skip(1) {
            let mu = |s: f64| oracle.moments_at(s, &dy.basis);
            let (m2, m1, p1, p2) = (mu(t - 2.0 * h), mu(t - h), mu(t + h), mu(t + 2.0 * h));
            let here = mu(t);
            let rhs = dy.rhs(&here);
            let scale = 1.0 + here[..dy.n_low].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for j in 0..dy.n_low {
                let fd = (m2[j] - 8.0 * m1[j] + 8.0 * p1[j] - p2[j]) / (12.0 * h);
                let rel = (fd - rhs[j]).abs() / scale;
                if rel > worst {
                    worst = rel;
                    at = format!("{name} t={t:.1} mu{}", dy.basis.at(j));
                }
            }
        }
    }
    outcome(worst <= C8_FD_TOL, format!("worst scaled residual {worst:.3e} at {at}"))
}

fn criterion_9() -> Outcome {
    let cases: [(&str, ReactionNetwork, &[&[f64]]); 5] = [
        ("toy", fixtures::toy(), &[&R_TOY, &R_TOY_MORE]),
        ("reversible", fixtures::reversible(), &[&R_REV, &R_REV_PERTURBED, &R_REV_FAR]),
        ("mixed", fixtures::reversible_mixed(), &[&R_REV]),
        ("cyclic", fixtures::cyclic(), &[&R_CYCLIC]),
        ("chain", fixtures::chain(), &[&R_CHAIN]),
    ];
    let mut worst = 0.0f64;
    let mut at = String::new();
    for (name, net, sets) in cases {
        let red = reduced(&net);
        let dy = build_moment_odes(&red, 3).unwrap();
        let oracle = Oracle::new(&red, DEFAULT_STATE_CAP).unwrap();
        let species = red.species_names()[0].clone();
        for rho in sets {
            for t in [0.0, 0.5, 1.0, 2.0, 3.0] {
                let q = BoundQuery::new(&species, Statistic::Mean, Sense::Upper, t, rho);
                let r = truth_residuals(&red, &dy, &oracle, &q, 1e-11).unwrap();
                let v = r.max_equality.max(-r.min_eigenvalue);
                if v > worst {
                    worst = v;
                    at = format!("{name} rho={rho:?} t={t}");
                }
            }
        }
    }
    outcome(worst <= C9_RESIDUAL_TOL, format!("worst residual {worst:.3e} at {at}"))
}

fn criterion_10() -> Outcome {
    let red = reduced(&fixtures::reversible());
    let t = targets(&["C", "D"], true);
    let o = opts(&R_REV, None);
    let a = to_csv(&run(&red, &grid(1.0, 0.25), &t, &o));
    let b = to_csv(&run(&red, &grid(1.0, 0.25), &t, &o));
    let s1 = ssa_simulate(&red, &[0.5, 1.0], 2000, 42).unwrap();
    let s2 = ssa_simulate(&red, &[0.5, 1.0], 2000, 42).unwrap();
    let s3 = ssa_simulate(&red, &[0.5, 1.0], 2000, 43).unwrap();
    let ssa_same = s1.means == s2.means && s1.variances == s2.variances;
    outcome(
        a == b && ssa_same && s1.means != s3.means,
        format!("csv identical: {}; ssa identical by seed: {ssa_same}", a == b),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("toy system bounds enclose the closed-form statistics", criterion_1),
        ("adding an exponent tightens the toy bounds", criterion_2),
        ("reversible system enclosure and long-time oracle values", criterion_3),
        ("perturbed and distant exponent sets stay valid", criterion_4),
        ("cyclic system eigenvalues and mean bounds", criterion_5),
        ("first-order chain bounds collapse onto the means", criterion_6),
        ("mixed initial distribution", criterion_7),
        ("moment equations match oracle finite differences", criterion_8),
        ("exact moments satisfy every constraint", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({})",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
