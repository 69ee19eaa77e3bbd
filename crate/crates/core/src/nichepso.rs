//! NichePSO: samples every zero of a nonnegative merit function.
//!
//! The main swarm starts on a Faure lattice with zero velocity and moves by
//! the cognition-only update. A particle whose best fitness has stopped
//! changing founds a subswarm with its nearest neighbour. Subswarms run the
//! full update, with a guaranteed-convergence perturbation on their best
//! particle, merge when their regions overlap, and absorb main-swarm
//! particles that stray inside them. Each subswarm's best position is
//! finally polished by damped least squares on the underlying equations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use crate::config::SwarmConfig;
use crate::faure::{scale_to_box, Faure};
use crate::lagrange::{MeritFunction, MeritWorkspace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("particle count must be positive")]
    NoParticles,
    #[error("search box has {found} dimensions, expected {expected}")]
    BoxMismatch { expected: usize, found: usize },
    #[error("search box dimension {0} is empty or not finite")]
    BadBox(usize),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<f64>,
    pub pbest_fitness: f64,
    /// Recent pbest fitness values, newest last.
    history: Vec<f64>,
}

impl Particle {
    fn record(&mut self, window: usize) {
        if self.history.len() == window {
            self.history.remove(0);
        }
        self.history.push(self.pbest_fitness);
    }

    /// Standard deviation of the recorded pbest fitness values.
    fn stagnation(&self) -> f64 {
        let h = &self.history;
        if h.iter().all(|v| v.to_bits() == h[0].to_bits()) {
            return 0.0;
        }
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        let var = h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h.len() as f64;
        var.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Subswarm {
    pub particles: Vec<Particle>,
    /// Index of the particle holding the best pbest.
    best: usize,
    pub radius: f64,
    /// Perturbation scale of the best particle, relative to box widths.
    rho: f64,
    successes: usize,
    failures: usize,
    stall: usize,
    reference: f64,
    pub age: usize,
    pub frozen: bool,
}

impl Subswarm {
    fn new(particles: Vec<Particle>) -> Self {
        let mut s = Subswarm {
            particles,
            best: 0,
            radius: 0.0,
            rho: 0.01,
            successes: 0,
            failures: 0,
            stall: 0,
            reference: f64::INFINITY,
            age: 0,
            frozen: false,
        };
        s.refresh();
        s.reference = s.gbest_fitness();
        s
    }

    pub fn gbest_position(&self) -> &[f64] {
        &self.particles[self.best].pbest_position
    }

    pub fn gbest_fitness(&self) -> f64 {
        self.particles[self.best].pbest_fitness
    }

    fn refresh(&mut self) {
        self.best = self
            .particles
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.pbest_fitness.total_cmp(&b.1.pbest_fitness))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let g = self.particles[self.best].pbest_position.clone();
        self.radius = self
            .particles
            .iter()
            .map(|p| distance(&p.position, &g))
            .fold(0.0, f64::max);
    }
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub main: Vec<Particle>,
    pub subswarms: Vec<Subswarm>,
    pub bounds: Vec<(f64, f64)>,
    pub iteration: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Root {
    pub position: Vec<f64>,
    pub fitness: f64,
    /// One of several roots sampling a continuum with a shared key value.
    pub continuum: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RootSet {
    pub roots: Vec<Root>,
    pub continuum: bool,
    pub subswarms: usize,
    pub iterations: usize,
    pub evaluations: usize,
}

impl RootSet {
    /// Flags roots that are pairwise distinct but share a key value within
    /// `tol`, when at least three do.
    pub fn flag_continuum(&mut self, key: impl Fn(&[f64]) -> Option<f64>, tol: f64) {
        let keys: Vec<Option<f64>> = self.roots.iter().map(|r| key(&r.position)).collect();
        for i in 0..self.roots.len() {
            let Some(ki) = keys[i] else { continue };
            let same = keys
                .iter()
                .filter(|k| k.is_some_and(|k| (k - ki).abs() <= tol))
                .count();
            if same >= 3 {
                self.roots[i].continuum = true;
                self.continuum = true;
            }
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn diagonal(bounds: &[(f64, f64)]) -> f64 {
    bounds
        .iter()
        .map(|(lo, hi)| (hi - lo).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn validate(cfg: &SwarmConfig, dim: usize, bounds: &[(f64, f64)]) -> Result<(), ConfigError> {
    if cfg.particle_count == 0 {
        return Err(ConfigError::NoParticles);
    }
    if bounds.len() != dim {
        return Err(ConfigError::BoxMismatch {
            expected: dim,
            found: bounds.len(),
        });
    }
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(ConfigError::BadBox(i));
        }
    }
    let positive = [
        (cfg.niche_variance_threshold, "nicheVarianceThreshold"),
        (cfg.merge_radius_factor, "mergeRadiusFactor"),
        (cfg.absorb_radius_factor, "absorbRadiusFactor"),
        (cfg.root_tolerance, "rootTolerance"),
        (cfg.dedupe_radius, "dedupeRadius"),
    ];
    for (v, name) in positive {
        if !(v > 0.0) {
            return Err(ConfigError::NonPositive(name));
        }
    }
    if cfg.niche_stagnation_window == 0 {
        return Err(ConfigError::NonPositive("nicheStagnationWindow"));
    }
    Ok(())
}

/// Main swarm on a Faure lattice over `bounds`, velocities zero.
pub fn initialize(
    cfg: &SwarmConfig,
    bounds: &[(f64, f64)],
    ws: &mut MeritWorkspace<'_>,
) -> Result<Swarm, ConfigError> {
    let dim = ws.dim();
    validate(cfg, dim, bounds)?;
    let faure = Faure::new(dim.max(1));
    let start = if cfg.faure_quality_skip {
        faure.quality_skip()
    } else {
        1
    };
    let before = ws.evaluations;
    let main = (0..cfg.particle_count as u64)
        .map(|i| {
            let position = scale_to_box(&faure.point(start + i), bounds);
            let fitness = ws.fitness(&position);
            Particle {
                velocity: vec![0.0; dim],
                pbest_position: position.clone(),
                position,
                pbest_fitness: fitness,
                history: Vec::new(),
            }
        })
        .collect();
    Ok(Swarm {
        main,
        subswarms: Vec::new(),
        bounds: bounds.to_vec(),
        iteration: 0,
        evaluations: ws.evaluations - before,
    })
}

fn clamp_to_box(p: &mut Particle, bounds: &[(f64, f64)]) {
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        if p.position[d] < *lo {
            p.position[d] = *lo;
            p.velocity[d] = 0.0;
        } else if p.position[d] > *hi {
            p.position[d] = *hi;
            p.velocity[d] = 0.0;
        }
    }
}

fn clamp_velocity(v: &mut [f64], bounds: &[(f64, f64)], fraction: f64) {
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        let vmax = fraction * (hi - lo);
        v[d] = v[d].clamp(-vmax, vmax);
    }
}

/// Evaluates the particle at its position and updates its pbest.
fn evaluate(p: &mut Particle, ws: &mut MeritWorkspace<'_>) -> bool {
    let fitness = ws.fitness(&p.position);
    if fitness < p.pbest_fitness {
        p.pbest_fitness = fitness;
        p.pbest_position.copy_from_slice(&p.position);
        true
    } else {
        false
    }
}

/// Cognition-only update of the main swarm.
pub fn step_main(
    swarm: &mut Swarm,
    cfg: &SwarmConfig,
    ws: &mut MeritWorkspace<'_>,
    rng: &mut ChaCha8Rng,
) {
    let before = ws.evaluations;
    for p in &mut swarm.main {
        let mut moved = false;
        for d in 0..p.position.len() {
            let r1: f64 = rng.gen();
            p.velocity[d] = cfg.inertia * p.velocity[d]
                + cfg.c1 * r1 * (p.pbest_position[d] - p.position[d]);
        }
        clamp_velocity(&mut p.velocity, &swarm.bounds, cfg.max_velocity);
        for d in 0..p.position.len() {
            if p.velocity[d] != 0.0 {
                p.position[d] += p.velocity[d];
                moved = true;
            }
        }
        if moved {
            clamp_to_box(p, &swarm.bounds);
            evaluate(p, ws);
        }
        p.record(cfg.niche_stagnation_window);
    }
    swarm.evaluations += ws.evaluations - before;
}

/// Moves every stagnant main-swarm particle, with its nearest main-swarm
/// neighbour, into a new subswarm. Returns the number created.
pub fn identify_niches(swarm: &mut Swarm, window: usize, threshold: f64) -> usize {
    let mut taken = vec![false; swarm.main.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..swarm.main.len() {
        if taken[i] {
            continue;
        }
        let p = &swarm.main[i];
        if p.history.len() < window || !(p.stagnation() < threshold) {
            continue;
        }
        taken[i] = true;
        let nearest = (0..swarm.main.len())
            .filter(|&j| !taken[j])
            .min_by(|&a, &b| {
                let da = distance(&swarm.main[a].position, &p.position);
                let db = distance(&swarm.main[b].position, &p.position);
                da.total_cmp(&db)
            });
        let mut group = vec![i];
        if let Some(j) = nearest {
            taken[j] = true;
            group.push(j);
        }
        groups.push(group);
    }
    if groups.is_empty() {
        return 0;
    }
    let mut slots: Vec<Option<Particle>> = swarm.main.drain(..).map(Some).collect();
    let created = groups.len();
    for group in groups {
        let members = group
            .iter()
            .map(|&i| slots[i].take().expect("each particle joins one niche"))
            .collect();
        swarm.subswarms.push(Subswarm::new(members));
    }
    swarm.main = slots.into_iter().flatten().collect();
    created
}

/// One full update of every active subswarm.
pub fn step_subswarms(
    swarm: &mut Swarm,
    cfg: &SwarmConfig,
    ws: &mut MeritWorkspace<'_>,
    rng: &mut ChaCha8Rng,
) {
    let before = ws.evaluations;
    let bounds = &swarm.bounds;
    for s in swarm.subswarms.iter_mut().filter(|s| !s.frozen) {
        s.age += 1;
        let gbest = s.gbest_position().to_vec();
        let old_best = s.gbest_fitness();
        let best = s.best;
        for (k, p) in s.particles.iter_mut().enumerate() {
            if k == best {
                // x = gbest + w v + rho (1 - 2 r), per dimension
                for d in 0..p.position.len() {
                    let width = bounds[d].1 - bounds[d].0;
                    let r: f64 = rng.gen();
                    let v = gbest[d] - p.position[d]
                        + cfg.inertia * p.velocity[d]
                        + s.rho * width * (1.0 - 2.0 * r);
                    p.velocity[d] = v;
                }
            } else {
                for d in 0..p.position.len() {
                    let r1: f64 = rng.gen();
                    let r2: f64 = rng.gen();
                    p.velocity[d] = cfg.inertia * p.velocity[d]
                        + cfg.c1 * r1 * (p.pbest_position[d] - p.position[d])
                        + cfg.c2 * r2 * (gbest[d] - p.position[d]);
                }
            }
            clamp_velocity(&mut p.velocity, bounds, cfg.max_velocity);
            for d in 0..p.position.len() {
                p.position[d] += p.velocity[d];
            }
            clamp_to_box(p, bounds);
            evaluate(p, ws);
        }
        s.refresh();
        let new_best = s.gbest_fitness();
        if new_best < old_best {
            s.successes += 1;
            s.failures = 0;
        } else {
            s.failures += 1;
            s.successes = 0;
        }
        if s.successes > 15 {
            s.rho = (s.rho * 2.0).min(0.5);
            s.successes = 0;
        } else if s.failures > 5 {
            s.rho = (s.rho * 0.5).max(1e-15);
            s.failures = 0;
        }
        if new_best < s.reference * (1.0 - 1e-6) {
            s.reference = new_best;
            s.stall = 0;
        } else {
            s.stall += 1;
        }
        if s.stall >= cfg.stall_iterations || new_best == 0.0 {
            s.frozen = true;
        }
    }
    swarm.evaluations += ws.evaluations - before;
}

/// Merges overlapping subswarms that share a basin and moves main-swarm
/// particles inside a subswarm's radius into it.
///
/// Two subswarms overlap when their best positions are closer than
/// `mergeRadiusFactor * (r1 + r2)`. They share a basin when the fitness at
/// the quarter points between their best positions does not exceed the
/// worse of the two. Only subswarms at least `min_age` iterations old whose
/// radius is below 1% of the box diagonal are merged.
pub fn merge_and_absorb(
    swarm: &mut Swarm,
    cfg: &SwarmConfig,
    ws: &mut MeritWorkspace<'_>,
    min_age: usize,
) -> usize {
    let before = ws.evaluations;
    let mut merges = 0;
    let n = swarm.subswarms.len();
    let settled_radius = 0.01 * diagonal(&swarm.bounds);
    let settled = |s: &Subswarm| s.age >= min_age && s.radius <= settled_radius;
    if n > 1 {
        // sweep along the first coordinate
        let mut order: Vec<usize> = (0..n).collect();
        let key = |s: &Subswarm| s.gbest_position().first().copied().unwrap_or(0.0);
        order.sort_by(|&a, &b| key(&swarm.subswarms[a]).total_cmp(&key(&swarm.subswarms[b])));
        let max_radius = swarm.subswarms.iter().map(|s| s.radius).fold(0.0, f64::max);
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut mid = vec![0.0; swarm.bounds.len()];
        for oi in 0..n {
            let a = order[oi];
            let sa = &swarm.subswarms[a];
            if !settled(sa) {
                continue;
            }
            let ka = key(sa);
            let reach = cfg.merge_radius_factor * (sa.radius + max_radius);
            for &b in &order[oi + 1..] {
                let sb = &swarm.subswarms[b];
                if key(sb) - ka > reach {
                    break;
                }
                if !settled(sb) {
                    continue;
                }
                let d = distance(sa.gbest_position(), sb.gbest_position());
                let overlap = d == 0.0 || d < cfg.merge_radius_factor * (sa.radius + sb.radius);
                if !overlap {
                    continue;
                }
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra == rb {
                    continue;
                }
                if d > 0.0 {
                    let worst = sa.gbest_fitness().max(sb.gbest_fitness());
                    let ridge = [0.25, 0.5, 0.75].iter().any(|&t| {
                        for (k, m) in mid.iter_mut().enumerate() {
                            let (pa, pb) = (sa.gbest_position()[k], sb.gbest_position()[k]);
                            *m = pa + t * (pb - pa);
                        }
                        !(ws.fitness(&mid) <= worst)
                    });
                    if ridge {
                        continue;
                    }
                }
                // a set's root is its smallest index
                parent[ra.max(rb)] = ra.min(rb);
                merges += 1;
            }
        }
        if merges > 0 {
            let old: Vec<Subswarm> = swarm.subswarms.drain(..).collect();
            let mut kept: Vec<Option<Subswarm>> = Vec::with_capacity(n);
            for (i, s) in old.into_iter().enumerate() {
                let r = root(&mut parent, i);
                if r == i {
                    kept.push(Some(s));
                } else {
                    kept.push(None);
                    let host = kept[r].as_mut().expect("roots precede their members");
                    host.age = host.age.max(s.age);
                    host.particles.extend(s.particles);
                    host.frozen = false;
                    host.stall = 0;
                    host.refresh();
                }
            }
            swarm.subswarms = kept.into_iter().flatten().collect();
        }
    }

    // absorption
    if !swarm.main.is_empty() && !swarm.subswarms.is_empty() {
        let mut keep = Vec::with_capacity(swarm.main.len());
        for p in swarm.main.drain(..) {
            let target = swarm.subswarms.iter().position(|s| {
                distance(&p.position, s.gbest_position()) <= cfg.absorb_radius_factor * s.radius
            });
            match target {
                Some(k) => {
                    let s = &mut swarm.subswarms[k];
                    s.particles.push(p);
                    s.frozen = false;
                    s.stall = 0;
                    s.refresh();
                }
                None => keep.push(p),
            }
        }
        swarm.main = keep;
    }
    swarm.evaluations += ws.evaluations - before;
    merges
}

/// Runs the swarm and returns every polished zero of `h` in `bounds`.
pub fn solve(
    h: &MeritFunction,
    cfg: &SwarmConfig,
    bounds: &[(f64, f64)],
    seed: u64,
) -> Result<RootSet, ConfigError> {
    let mut ws = h.workspace();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swarm = initialize(cfg, bounds, &mut ws)?;
    let window = cfg.niche_stagnation_window;
    let min_age = 10;
    for t in 1..=cfg.max_iterations {
        swarm.iteration = t;
        step_main(&mut swarm, cfg, &mut ws, &mut rng);
        step_subswarms(&mut swarm, cfg, &mut ws, &mut rng);
        merge_and_absorb(&mut swarm, cfg, &mut ws, min_age);
        if t >= window {
            identify_niches(&mut swarm, window, cfg.niche_variance_threshold);
        }
        if swarm.main.is_empty() && swarm.subswarms.iter().all(|s| s.frozen) {
            break;
        }
    }

    let mut candidates: Vec<(Vec<f64>, f64)> = swarm
        .subswarms
        .iter()
        .map(|s| (s.gbest_position().to_vec(), s.gbest_fitness()))
        .chain(
            swarm
                .main
                .iter()
                .map(|p| (p.pbest_position.clone(), p.pbest_fitness)),
        )
        .collect();
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    // members may hold a root their subswarm's gbest has since left
    let mut stragglers: Vec<(Vec<f64>, f64)> = swarm
        .subswarms
        .iter()
        .flat_map(|s| s.particles.iter())
        .filter(|p| p.pbest_fitness <= cfg.root_tolerance)
        .map(|p| (p.pbest_position.clone(), p.pbest_fitness))
        .collect();
    stragglers.sort_by(|a, b| a.1.total_cmp(&b.1));
    let primary = candidates.len();
    candidates.extend(stragglers);

    let radius = cfg.dedupe_radius * diagonal(bounds);
    let settled_radius = 0.01 * diagonal(bounds);
    let mut roots: Vec<Root> = Vec::new();
    let polish_start = ws.evaluations;
    for (k, (x, fitness)) in candidates.into_iter().enumerate() {
        if !fitness.is_finite() {
            continue;
        }
        if k >= primary && roots.iter().any(|r| distance(&r.position, &x) <= settled_radius) {
            continue;
        }
        let (px, pf) = ws.polish(&x, cfg.polish_iterations);
        let (px, pf) = if pf <= fitness { (px, pf) } else { (x, fitness) };
        if !(pf <= cfg.root_tolerance) {
            continue;
        }
        match roots.iter_mut().find(|r| distance(&r.position, &px) <= radius) {
            Some(r) => {
                if pf < r.fitness {
                    r.position = px;
                    r.fitness = pf;
                }
            }
            None => roots.push(Root {
                position: px,
                fitness: pf,
                continuum: false,
            }),
        }
    }
    swarm.evaluations += ws.evaluations - polish_start;
    log::debug!(
        "nichepso: {} subswarms, {} roots, {} iterations, {} evaluations",
        swarm.subswarms.len(),
        roots.len(),
        swarm.iteration,
        swarm.evaluations
    );
    Ok(RootSet {
        roots,
        continuum: false,
        subswarms: swarm.subswarms.len(),
        iterations: swarm.iteration,
        evaluations: swarm.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn merit(eqs: Vec<Expr>, dim: usize) -> MeritFunction {
        MeritFunction::from_equations(eqs, dim)
    }

    fn small(particles: usize, iterations: usize) -> SwarmConfig {
        SwarmConfig {
            particle_count: particles,
            max_iterations: iterations,
            ..SwarmConfig::default()
        }
    }

    #[test]
    fn zero_particles_is_a_config_error() {
        let h = merit(vec![Expr::var(0)], 1);
        let err = initialize(&small(0, 1), &[(0.0, 1.0)], &mut h.workspace()).unwrap_err();
        assert_eq!(err, ConfigError::NoParticles);
        let err = initialize(&small(4, 1), &[], &mut h.workspace()).unwrap_err();
        assert!(matches!(err, ConfigError::BoxMismatch { .. }));
    }

    #[test]
    fn initial_layout_is_faure() {
        let h = merit(vec![Expr::var(0)], 1);
        let swarm = initialize(&small(3, 1), &[(0.0, 1.0)], &mut h.workspace()).unwrap();
        let xs: Vec<f64> = swarm.main.iter().map(|p| p.position[0]).collect();
        assert_eq!(xs, vec![0.5, 0.25, 0.75]);
        assert!(swarm.main.iter().all(|p| p.velocity == vec![0.0]));
    }

    #[test]
    fn particle_at_pbest_stays_put() {
        let h = merit(vec![Expr::var(0)], 1);
        let mut ws = h.workspace();
        let cfg = small(5, 1);
        let mut swarm = initialize(&cfg, &[(-1.0, 1.0)], &mut ws).unwrap();
        let before: Vec<f64> = swarm.main.iter().map(|p| p.position[0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        step_main(&mut swarm, &cfg, &mut ws, &mut rng);
        let after: Vec<f64> = swarm.main.iter().map(|p| p.position[0]).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn stationary_particles_found_niches() {
        let h = merit(vec![Expr::var(0)], 1);
        let mut ws = h.workspace();
        let cfg = small(6, 1);
        let mut swarm = initialize(&cfg, &[(-1.0, 1.0)], &mut ws).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2 {
            step_main(&mut swarm, &cfg, &mut ws, &mut rng);
        }
        assert_eq!(identify_niches(&mut swarm, 3, 1e-6), 0);
        step_main(&mut swarm, &cfg, &mut ws, &mut rng);
        assert_eq!(identify_niches(&mut swarm, 3, 1e-6), 3);
        assert!(swarm.main.is_empty());
        assert!(swarm.subswarms.iter().all(|s| s.particles.len() == 2));
    }

    #[test]
    fn oscillating_fitness_does_not_found_a_niche() {
        let mut p = Particle {
            position: vec![0.0],
            velocity: vec![0.0],
            pbest_position: vec![0.0],
            pbest_fitness: 1.0,
            history: vec![],
        };
        for v in [1.0, 0.5, 0.1] {
            p.pbest_fitness = v;
            p.record(3);
        }
        let mut swarm = Swarm {
            main: vec![p],
            subswarms: vec![],
            bounds: vec![(-1.0, 1.0)],
            iteration: 3,
            evaluations: 0,
        };
        assert_eq!(identify_niches(&mut swarm, 3, 1e-6), 0);
    }

    fn lone(x: f64, fitness: f64, spread: f64) -> Subswarm {
        let mk = |pos: f64| Particle {
            position: vec![pos],
            velocity: vec![0.0],
            pbest_position: vec![pos],
            pbest_fitness: if pos == x { fitness } else { fitness + 1.0 },
            history: vec![],
        };
        let mut s = Subswarm::new(vec![mk(x), mk(x + spread)]);
        s.age = 100;
        s
    }

    #[test]
    fn merge_rules() {
        // x^2 (x - 2)^2 has zeros at 0 and 2
        let x = Expr::var(0);
        let h = merit(vec![&x * &(&x - 2.0)], 1);
        let mut ws = h.workspace();
        let cfg = SwarmConfig::default();

        let mut swarm = Swarm {
            main: vec![],
            subswarms: vec![lone(0.0, 0.0, 0.0), lone(0.0, 0.0, 0.0)],
            bounds: vec![(-1.0, 3.0)],
            iteration: 0,
            evaluations: 0,
        };
        assert_eq!(merge_and_absorb(&mut swarm, &cfg, &mut ws, 0), 1);
        assert_eq!(swarm.subswarms.len(), 1);

        let mut swarm = Swarm {
            main: vec![],
            subswarms: vec![lone(0.0, 0.0, 0.1), lone(2.0, 0.0, 0.1)],
            bounds: vec![(-1.0, 3.0)],
            iteration: 0,
            evaluations: 0,
        };
        assert_eq!(merge_and_absorb(&mut swarm, &cfg, &mut ws, 0), 0);
        assert_eq!(swarm.subswarms.len(), 2);

        let walker = Particle {
            position: vec![2.05],
            velocity: vec![0.0],
            pbest_position: vec![2.05],
            pbest_fitness: 1.0,
            history: vec![],
        };
        swarm.main.push(walker);
        merge_and_absorb(&mut swarm, &cfg, &mut ws, 0);
        assert!(swarm.main.is_empty());
        assert_eq!(
            swarm.subswarms.iter().map(|s| s.particles.len()).sum::<usize>(),
            5
        );
    }

    #[test]
    fn roots_of_unit_square() {
        let x = Expr::var(0);
        let h = merit(vec![x.powi(2) - 1.0], 1);
        let set = solve(&h, &small(40, 100), &[(-3.0, 3.0)], 7).unwrap();
        let mut xs: Vec<f64> = set.roots.iter().map(|r| r.position[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 2, "{xs:?}");
        assert!((xs[0] + 1.0).abs() < 1e-6 && (xs[1] - 1.0).abs() < 1e-6);
        assert!(set.roots.iter().all(|r| r.fitness <= 1e-8));
    }

    #[test]
    fn same_seed_same_roots() {
        let x = Expr::var(0);
        let y = Expr::var(1);
        let h = merit(vec![x.powi(2) + y.clone() - 11.0, x.clone() + y.powi(2) - 7.0], 2);
        let cfg = small(60, 80);
        let a = solve(&h, &cfg, &[(-5.0, 5.0), (-5.0, 5.0)], 3).unwrap();
        let b = solve(&h, &cfg, &[(-5.0, 5.0), (-5.0, 5.0)], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuum_flag_needs_three_roots() {
        let mut set = RootSet {
            roots: [0.0, 1.0, 2.0]
                .iter()
                .map(|&x| Root {
                    position: vec![x],
                    fitness: 0.0,
                    continuum: false,
                })
                .collect(),
            ..RootSet::default()
        };
        set.flag_continuum(|_| Some(5.0), 1e-4);
        assert!(set.continuum);
        set.roots.pop();
        set.continuum = false;
        for r in &mut set.roots {
            r.continuum = false;
        }
        set.flag_continuum(|_| Some(5.0), 1e-4);
        assert!(!set.continuum);
    }
}
