mod common;

use common::{clustered, himmelblau_oracle, recovers};

use prange_core::config::SwarmConfig;
use prange_core::expr::Expr;
use prange_core::lagrange::{build_lagrange_from, build_merit, MeritFunction};
use prange_core::nichepso::{
    initialize, merge_and_absorb, solve, step_main, step_subswarms, identify_niches, ConfigError,
    RootSet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(particles: usize, iterations: usize) -> SwarmConfig {
    SwarmConfig {
        particle_count: particles,
        max_iterations: iterations,
        ..SwarmConfig::default()
    }
}

fn x() -> Expr {
    Expr::var(0)
}

fn y() -> Expr {
    Expr::var(1)
}

fn himmelblau() -> MeritFunction {
    MeritFunction::from_equations(vec![x().powi(2) + y() - 11.0, x() + y().powi(2) - 7.0], 2)
}

fn success_rate(h: &MeritFunction, bounds: &[(f64, f64)], c: &SwarmConfig, expected: &[Vec<f64>]) -> usize {
    (0..20u64)
        .filter(|&seed| recovers(&solve(h, c, bounds, seed).unwrap(), expected, 1e-3))
        .count()
}

#[test]
fn roots_of_x_squared_minus_one() {
    let h = MeritFunction::from_equations(vec![x().powi(2) - 1.0], 1);
    let ok = success_rate(&h, &[(-10.0, 10.0)], &cfg(100, 200), &[vec![-1.0], vec![1.0]]);
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn two_minima_merit_recovers_both() {
    let h = MeritFunction::from_equations(vec![x() * (x() - 2.0)], 1);
    let ok = success_rate(&h, &[(-5.0, 5.0)], &cfg(100, 200), &[vec![0.0], vec![2.0]]);
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn himmelblau_four_roots() {
    let oracle = himmelblau_oracle();
    assert_eq!(oracle.len(), 4);
    assert!(oracle.iter().any(|r| (r[0] - 3.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12));
    let expected: Vec<Vec<f64>> = oracle.iter().map(|r| r.to_vec()).collect();
    let ok = success_rate(&himmelblau(), &[(-6.0, 6.0); 2], &cfg(400, 200), &expected);
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn linear_lagrange_case_has_single_root() {
    let ls = build_lagrange_from(&x(), &[x() - 5.0], 1);
    let h = build_merit(&ls);
    let set = solve(&h, &cfg(100, 200), &[(-20.0, 20.0), (-100.0, 100.0)], 3).unwrap();
    let found = clustered(&set, 1e-3);
    assert_eq!(found.len(), 1);
    assert!((found[0][0] - 5.0).abs() < 1e-6 && (found[0][1] + 1.0).abs() < 1e-6);
}

#[test]
fn identical_seeds_give_identical_root_sets() {
    let h = himmelblau();
    let c = cfg(200, 100);
    let a = solve(&h, &c, &[(-6.0, 6.0); 2], 11).unwrap();
    let b = solve(&h, &c, &[(-6.0, 6.0); 2], 11).unwrap();
    assert_eq!(a, b);
    let bits = |s: &RootSet| -> Vec<u64> {
        s.roots.iter().flat_map(|r| r.position.iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn every_root_is_within_tolerance_and_budget_holds() {
    for (h, bounds) in [
        (himmelblau(), vec![(-6.0, 6.0); 2]),
        (MeritFunction::from_equations(vec![x().powi(2) - 1.0], 1), vec![(-10.0, 10.0)]),
    ] {
        let c = cfg(150, 120);
        let set = solve(&h, &c, &bounds, 1).unwrap();
        for r in &set.roots {
            assert!(r.fitness <= c.root_tolerance);
            assert!(h.eval(&r.position) <= c.root_tolerance);
        }
        assert!(set.evaluations <= c.particle_count * c.max_iterations * 2);
    }
}

#[test]
fn empty_root_set_is_legal() {
    let h = MeritFunction::from_equations(vec![x().powi(2) + 1.0], 1);
    let set = solve(&h, &cfg(50, 50), &[(-3.0, 3.0)], 0).unwrap();
    assert!(set.roots.is_empty());
}

#[test]
fn configuration_errors() {
    let h = himmelblau();
    assert_eq!(solve(&h, &cfg(0, 10), &[(-1.0, 1.0); 2], 0), Err(ConfigError::NoParticles));
    assert_eq!(
        solve(&h, &cfg(10, 10), &[(-1.0, 1.0)], 0),
        Err(ConfigError::BoxMismatch { expected: 2, found: 1 })
    );
    assert!(matches!(
        solve(&h, &cfg(10, 10), &[(-1.0, 1.0), (1.0, f64::INFINITY)], 0),
        Err(ConfigError::BadBox(1))
    ));
}

fn drive(
    h: &MeritFunction,
    c: &SwarmConfig,
    bounds: &[(f64, f64)],
    seed: u64,
    iterations: usize,
    mut observe: impl FnMut(usize, &prange_core::nichepso::Swarm),
) {
    let mut ws = h.workspace();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swarm = initialize(c, bounds, &mut ws).unwrap();
    observe(0, &swarm);
    for t in 1..=iterations {
        swarm.iteration = t;
        let before: Vec<f64> = swarm.main.iter().map(|p| p.pbest_fitness).collect();
        step_main(&mut swarm, c, &mut ws, &mut rng);
        for (p, b) in swarm.main.iter().zip(&before) {
            assert!(p.pbest_fitness <= *b);
        }
        step_subswarms(&mut swarm, c, &mut ws, &mut rng);
        merge_and_absorb(&mut swarm, c, &mut ws, 10);
        if t >= c.niche_stagnation_window {
            identify_niches(&mut swarm, c.niche_stagnation_window, c.niche_variance_threshold);
        }
        observe(t, &swarm);
    }
}

#[test]
fn two_minima_spawn_two_subswarms_within_200_iterations() {
    let h = MeritFunction::from_equations(vec![x() * (x() - 2.0)], 1);
    let c = cfg(60, 200);
    let hits = (0..20u64)
        .filter(|&seed| {
            let mut near = [false, false];
            drive(&h, &c, &[(-5.0, 5.0)], seed, 200, |_, s| {
                for sub in &s.subswarms {
                    let g = sub.gbest_position()[0];
                    near[0] |= g.abs() < 1e-2;
                    near[1] |= (g - 2.0).abs() < 1e-2;
                }
            });
            near[0] && near[1]
        })
        .count();
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn median_pbest_fitness_decreases_on_a_parabola() {
    let h = MeritFunction::from_equations(vec![x()], 1);
    let c = cfg(101, 50);
    let mut medians = Vec::new();
    drive(&h, &c, &[(-1.0, 1.0)], 42, 50, |t, s| {
        if t == 0 || t == 50 {
            let mut all: Vec<f64> = s
                .main
                .iter()
                .chain(s.subswarms.iter().flat_map(|sub| sub.particles.iter()))
                .map(|p| p.pbest_fitness)
                .collect();
            all.sort_by(f64::total_cmp);
            medians.push(all[all.len() / 2]);
        }
    });
    assert!(medians[1] < medians[0], "{medians:?}");
}
