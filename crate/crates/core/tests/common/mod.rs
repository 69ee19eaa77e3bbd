#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use prange_core::config::Config;
use prange_core::model::ConstraintSystem;
use prange_core::separation::{separate, SeparatedFunction};

pub fn systems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../systems")
}

pub fn load(name: &str) -> ConstraintSystem {
    ConstraintSystem::load_file(&systems_dir().join(format!("{name}.json")))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Swarm sized for tests that run the full pipeline many times.
pub fn small_config(particles: usize, iterations: usize) -> Config {
    let mut cfg = Config::default();
    cfg.swarm.particle_count = particles;
    cfg.swarm.max_iterations = iterations;
    cfg
}

pub fn fixed(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn names(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn sep(
    sys: &ConstraintSystem,
    target: &str,
    fixed_values: &[(&str, f64)],
    unassigned: &[&str],
    cfg: &Config,
) -> SeparatedFunction {
    separate(sys, target, &fixed(fixed_values), &names(unassigned), cfg).unwrap()
}

/// Scalar central difference of `f` along coordinate `j`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], j: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[j] += h;
    b[j] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

use prange_core::expr::Expr;
use rand::Rng;

/// Random smooth expression over `n_vars` variables. Square roots and
/// divisors are shifted away from zero so the result is defined everywhere.
pub fn random_expr<R: Rng>(rng: &mut R, n_vars: usize, depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.7) {
            Expr::var(rng.gen_range(0..n_vars))
        } else {
            Expr::constant(rng.gen_range(-3.0..3.0))
        };
    }
    let a = random_expr(rng, n_vars, depth - 1);
    match rng.gen_range(0..8) {
        0 => &a + &random_expr(rng, n_vars, depth - 1),
        1 => &a - &random_expr(rng, n_vars, depth - 1),
        2 => &a * &random_expr(rng, n_vars, depth - 1),
        3 => &a / &(a.powi(2) + 1.0),
        4 => a.powi(rng.gen_range(2..4)),
        5 => (a.powi(2) + 0.5).sqrt(),
        6 => a.cos(),
        _ => -a,
    }
}

/// Zeros of the Himmelblau equations: grid minima of `h` refined by Newton.
pub fn himmelblau_oracle() -> Vec<[f64; 2]> {
    let h = |p: [f64; 2]| (p[0] * p[0] + p[1] - 11.0).powi(2) + (p[0] + p[1] * p[1] - 7.0).powi(2);
    let step = 0.05;
    let n = (12.0 / step) as i32;
    let mut roots: Vec<[f64; 2]> = Vec::new();
    for i in 1..n {
        for j in 1..n {
            let p = [-6.0 + i as f64 * step, -6.0 + j as f64 * step];
            let centre = h(p);
            let is_min = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .all(|(di, dj)| h([p[0] + *di as f64 * step, p[1] + *dj as f64 * step]) >= centre);
            if !is_min {
                continue;
            }
            let mut q = p;
            for _ in 0..50 {
                let (f1, f2) = (q[0] * q[0] + q[1] - 11.0, q[0] + q[1] * q[1] - 7.0);
                let (a, b, c, d) = (2.0 * q[0], 1.0, 1.0, 2.0 * q[1]);
                let det = a * d - b * c;
                q = [q[0] - (d * f1 - b * f2) / det, q[1] - (a * f2 - c * f1) / det];
            }
            if h(q) < 1e-20 && !roots.iter().any(|r| (r[0] - q[0]).hypot(r[1] - q[1]) < 1e-6) {
                roots.push(q);
            }
        }
    }
    roots
}

/// Distinct root positions, clustered at `tol`.
pub fn clustered(set: &prange_core::nichepso::RootSet, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in &set.roots {
        let near = out.iter().any(|c| {
            c.iter().zip(&r.position).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < tol
        });
        if !near {
            out.push(r.position.clone());
        }
    }
    out
}

pub fn recovers(set: &prange_core::nichepso::RootSet, expected: &[Vec<f64>], tol: f64) -> bool {
    let found = clustered(set, tol);
    found.len() == expected.len()
        && expected.iter().all(|e| {
            found.iter().any(|f| f.iter().zip(e).all(|(a, b)| (a - b).abs() < tol))
        })
}
