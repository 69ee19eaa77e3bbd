//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{central_difference, himmelblau_oracle, load, random_expr, recovers, sep, small_config};
use prange_core::config::Config;
use prange_core::endpoints::{closed_candidates, open_candidates, Closedness};
use prange_core::expr::Expr;
use prange_core::lagrange::{build_lagrange_from, MeritFunction};
use prange_core::nichepso::solve;
use prange_core::ranges::{check_feasible, Interval, ParameterRange};
use prange_core::separation::SeparatedFunction;
use prange_core::session::{range_of, EditingSession};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn session(system: &str, names: &[&str], cfg: Config, seed: u64) -> EditingSession {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    EditingSession::select(load(system), &names, cfg, seed).unwrap()
}

fn is_zero_to_infinity(r: &ParameterRange) -> bool {
    matches!(
        r.intervals.as_slice(),
        [Interval { lo, lo_closed: true, hi, hi_closed: false }] if *lo == 0.0 && hi.is_infinite()
    )
}

fn is_zero_to_pi(r: &ParameterRange) -> bool {
    matches!(
        r.intervals.as_slice(),
        [Interval { lo, lo_closed: true, hi, hi_closed: false }]
            if *lo == 0.0 && *hi == std::f64::consts::PI
    )
}

fn single_closed(r: &ParameterRange, lo: f64, hi: f64, tol: f64) -> bool {
    matches!(
        r.intervals.as_slice(),
        [i] if i.lo_closed && i.hi_closed && (i.lo - lo).abs() <= tol && (i.hi - hi).abs() <= tol
    )
}

fn case1_oracle(d1: f64) -> (f64, f64) {
    let diag = (d1 * d1 + 100.0).sqrt();
    (diag - 10.0, diag + 10.0)
}

fn triangle_stage1() -> Outcome {
    let start = Instant::now();
    let mut s = session("triangle", &["d2", "d3"], Config::default(), 42);
    let r = s.ranges().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let d2 = &r.ranges["d2"];
    let d3 = &r.ranges["d3"];
    check(
        is_zero_to_infinity(d2) && is_zero_to_infinity(d3) && elapsed < Duration::from_secs(60),
        format!("d2 {d2}, d3 {d3}, {:.1} s at 2000/500", elapsed.as_secs_f64()),
    )
}

fn triangle_stage2() -> Outcome {
    let mut s = session("triangle", &["d2", "d3"], Config::default(), 42);
    s.ranges().map_err(|e| e.to_string())?;
    s.assign("d2", 20.0).map_err(|e| e.to_string())?;
    let r = s.ranges().map_err(|e| e.to_string())?;
    let d3 = &r.ranges["d3"];
    check(single_closed(d3, 10.0, 30.0, 1e-3), format!("d3 {d3}"))
}

fn case1_reproduction() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (d1, published) in [(10.0, (4.14, 24.14)), (30.0, (21.62, 41.62))] {
        let mut s = session("quadrangle", &["d1", "d3"], Config::default(), 42);
        let stage1 = s.ranges().map_err(|e| e.to_string())?;
        let d1_range = &stage1.ranges["d1"];
        ok &= is_zero_to_infinity(d1_range);
        s.assign("d1", d1).map_err(|e| e.to_string())?;
        let r = s.ranges().map_err(|e| e.to_string())?;
        let d3 = &r.ranges["d3"];
        let (lo, hi) = case1_oracle(d1);
        ok &= single_closed(d3, published.0, published.1, 0.05);
        ok &= single_closed(d3, lo, hi, 1e-3);
        notes.push(format!("d1 {d1_range}; d1={d1}: d3 {d3} (oracle [{lo:.6}, {hi:.6}])"));
    }
    check(ok, notes.join("; "))
}

fn completeness_demonstration() -> Outcome {
    let mut s = session("quadrangle", &["d1", "d3"], Config::default(), 42);
    s.ranges().map_err(|e| e.to_string())?;
    s.assign("d1", 30.0).map_err(|e| e.to_string())?;
    s.ranges().map_err(|e| e.to_string())?;
    s.assign("d3", 25.0).map_err(|e| e.to_string())?;
    let solution = s.finalize().map_err(|e| e.to_string())?;
    check(
        solution.residual < 1e-10 && (solution.measured["d3"] - 25.0).abs() < 1e-4,
        format!("d1:=30, d3:=25 finalized with residual {:.1e}", solution.residual),
    )
}

fn optimum_recovery() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for gauge in [true, false] {
        let mut cfg = Config::default();
        cfg.gauge.enabled = gauge;
        let sf = sep(&load("triangle"), "d3", &[("d1", 10.0), ("d2", 20.0)], &[], &cfg);
        let mut hits = 0;
        let mut flagged = 0;
        for seed in 0..20u64 {
            let closed = closed_candidates(&sf, &cfg, seed).map_err(|e| e.to_string())?;
            let v: Vec<f64> = closed.candidates.iter().map(|c| c.value).collect();
            let exact = v.len() == 2 && (v[0] - 10.0).abs() <= 1e-3 && (v[1] - 30.0).abs() <= 1e-3;
            flagged += usize::from(closed.continuum);
            if exact && (gauge || closed.continuum) {
                hits += 1;
            }
        }
        ok &= hits >= 19;
        notes.push(format!(
            "gauge {}: {hits}/20 exact, continuum flagged {flagged}/20",
            if gauge { "on" } else { "off" }
        ));
    }
    check(ok, notes.join("; "))
}

/// Maximal runs of feasible sweep points, as `(first, last)` values.
fn sweep(sf: &SeparatedFunction, cfg: &Config, top: f64, step: f64) -> Vec<(f64, f64)> {
    let mut runs: Vec<(f64, f64)> = Vec::new();
    let mut hint: Option<Vec<f64>> = None;
    let mut open_run = false;
    let count = (top / step).round() as usize;
    for k in 0..=count {
        let p = k as f64 * step;
        let v = check_feasible(sf, p, cfg, hint.as_deref());
        if v.solvable {
            hint = v.witness;
            match runs.last_mut() {
                Some(run) if open_run => run.1 = p,
                _ => runs.push((p, p)),
            }
        }
        open_run = v.solvable;
    }
    runs
}

fn brute_force_equivalence() -> Outcome {
    let cfg = Config::default();
    let step = 0.05;
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, sf) in [
        ("triangle d3", sep(&load("triangle"), "d3", &[("d1", 10.0), ("d2", 20.0)], &[], &cfg)),
        (
            "case 1 d3",
            sep(&load("quadrangle"), "d3", &[("d1", 10.0), ("d2", 10.0), ("d4", 10.0)], &[], &cfg),
        ),
    ] {
        let r = range_of(&sf, &cfg, 42).map_err(|e| e.to_string())?;
        let largest = r
            .provenance
            .candidates
            .iter()
            .map(|c| c.value)
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let top = 3.0 * largest;
        let runs = sweep(&sf, &cfg, top, step);
        let same = runs.len() == r.intervals.len()
            && runs.iter().zip(&r.intervals).all(|(run, i)| {
                let hi = if i.hi.is_finite() { i.hi } else { top };
                (run.0 - i.lo).abs() <= step && (run.1 - hi).abs() <= step
            });
        ok &= same;
        let runs: Vec<String> = runs.iter().map(|(a, b)| format!("[{a:.2}, {b:.2}]")).collect();
        notes.push(format!("{label}: sweep {} vs {r}", runs.join(" ")));
    }
    check(ok, notes.join("; "))
}

fn gradient_suite() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let (m, n) = (4, 2);
        let f = random_expr(&mut rng, m, 3);
        let g: Vec<Expr> = (0..n).map(|_| random_expr(&mut rng, m, 3)).collect();
        let ls = build_lagrange_from(&f, &g, m);
        let point: Vec<f64> = (0..m + n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        for j in 0..m + n {
            let analytic = if j < m {
                ls.equations[j].eval(&point).unwrap()
            } else {
                ls.lagrangian.differentiate(j).simplify().eval(&point).unwrap()
            };
            let fd = central_difference(|y| ls.lagrangian.eval(y).unwrap(), &point, j, 1e-5);
            worst = worst.max((analytic - fd).abs() / analytic.abs().max(1.0));
        }
    }
    check(worst < 1e-6, format!("worst relative error {worst:.2e} over 20 functions"))
}

fn multimodal_suite() -> Outcome {
    let x = Expr::var(0);
    let y = Expr::var(1);
    let himmelblau = MeritFunction::from_equations(
        vec![x.powi(2) + y.clone() - 11.0, x.clone() + y.powi(2) - 7.0],
        2,
    );
    let oracle: Vec<Vec<f64>> = himmelblau_oracle().iter().map(|r| r.to_vec()).collect();
    let problems = [
        (
            "x^2-1",
            MeritFunction::from_equations(vec![x.powi(2) - 1.0], 1),
            vec![(-10.0, 10.0)],
            vec![vec![-1.0], vec![1.0]],
            100,
        ),
        (
            "x^2(x-2)^2",
            MeritFunction::from_equations(vec![&x * &(&x - 2.0)], 1),
            vec![(-5.0, 5.0)],
            vec![vec![0.0], vec![2.0]],
            100,
        ),
        ("himmelblau", himmelblau, vec![(-6.0, 6.0); 2], oracle, 400),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, h, bounds, expected, particles) in &problems {
        let cfg = small_config(*particles, 200).swarm;
        let hits = (0..20u64)
            .filter(|&s| recovers(&solve(h, &cfg, bounds, s).unwrap(), expected, 1e-3))
            .count();
        let deterministic = solve(h, &cfg, bounds, 5).unwrap() == solve(h, &cfg, bounds, 5).unwrap();
        ok &= hits >= 19 && deterministic;
        notes.push(format!("{label} {hits}/20{}", if deterministic { "" } else { " NONDETERMINISTIC" }));
    }
    check(ok, notes.join(", "))
}

fn open_endpoint_suite() -> Outcome {
    let cfg = Config::default();
    let slider = sep(&load("slider"), "d1", &[("d2", 10.0)], &[], &cfg);
    let open = open_candidates(&slider, &slider.singular, &cfg, 42).map_err(|e| e.to_string())?;
    let zero = open
        .iter()
        .filter(|c| c.closedness == Closedness::Open)
        .map(|c| c.value)
        .fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let range = range_of(&slider, &cfg, 42).map_err(|e| e.to_string())?;
    let conflict = sep(&load("slider"), "d2", &[("d1", 10.0)], &[], &cfg);
    let none = open_candidates(&conflict, &conflict.singular, &cfg, 42).map_err(|e| e.to_string())?;
    check(
        zero < 1e-3 && range.intervals.first().is_some_and(|i| !i.lo_closed) && none.is_empty(),
        format!(
            "slider open candidate |v| = {zero:.1e}, range {range}; conflicting distance: {} open candidates",
            none.len()
        ),
    )
}

fn hexagon_steps() -> Result<String, String> {
    let sys = load("hexagon");
    let names = sys.parameter_names();
    let cfg = small_config(500, 200);
    let mut s = EditingSession::select(sys, &names, cfg, 42).map_err(|e| e.to_string())?;
    let mut computed = 0;
    for (step, name) in ["d1", "d2", "d3", "d6"].iter().enumerate() {
        let r = s.ranges().map_err(|e| e.to_string())?;
        if !r.errors.is_empty() {
            return Err(format!("step {}: {:?}", step + 1, r.errors));
        }
        for (param, range) in &r.ranges {
            computed += 1;
            let shape = if param.starts_with('a') { is_zero_to_pi(range) } else { is_zero_to_infinity(range) };
            if !shape {
                return Err(format!("step {}: {param} = {range}", step + 1));
            }
        }
        s.assign(name, 10.0).map_err(|e| e.to_string())?;
    }
    Ok(format!("{computed} ranges over steps 1-4"))
}

/// One random editing walk; returns the finalize residual.
fn walk(system: &str, names: &[&str], cfg: &Config, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = session(system, names, cfg.clone(), 1000 + seed);
    while !s.unassigned().is_empty() {
        let r = s.ranges().map_err(|e| e.to_string())?;
        let unassigned = s.unassigned();
        let name = &unassigned[rng.gen_range(0..unassigned.len())];
        let range = &r.ranges[name];
        if range.is_empty() {
            return Err(format!("{name} has an empty range"));
        }
        let i = range.intervals[rng.gen_range(0..range.intervals.len())];
        let hi = if i.hi.is_finite() { i.hi } else { i.lo + 100.0 };
        let t: f64 = rng.gen_range(0.001..0.999);
        let value = if i.is_point() { i.lo } else { i.lo + t * (hi - i.lo) };
        s.assign(name, value).map_err(|e| format!("{name} := {value}: {e}"))?;
    }
    s.finalize().map(|sol| sol.residual).map_err(|e| e.to_string())
}

fn hexagon_and_walks() -> Outcome {
    let hexagon = hexagon_steps()?;
    let mut worst: f64 = 0.0;
    for (system, names) in [("triangle", ["d2", "d3"]), ("quadrangle", ["d1", "d3"])] {
        for w in 0..25u64 {
            let residual = walk(system, &names, &Config::default(), w)
                .map_err(|e| format!("{system} walk {w}: {e}"))?;
            worst = worst.max(residual);
        }
    }
    check(
        worst < 1e-10,
        format!("hexagon {hexagon}; 50 walks, worst finalize residual {worst:.1e}"),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("triangle stage 1", triangle_stage1),
        ("triangle stage 2", triangle_stage2),
        ("case 1 reproduction", case1_reproduction),
        ("completeness demonstration", completeness_demonstration),
        ("closed-endpoint optimum recovery", optimum_recovery),
        ("brute-force oracle equivalence", brute_force_equivalence),
        ("gradient suite", gradient_suite),
        ("multimodal solver suite", multimodal_suite),
        ("open-endpoint suite", open_endpoint_suite),
        ("hexagon steps 1-4 and random-walk soundness", hexagon_and_walks),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
