//! Endpoint candidates of a target parameter's range.
//!
//! Closed candidates are the values of `f` at conditional extremes on
//! `G = 0`. Open candidates are limits of `f` as a point-defined line
//! collapses: `G` is augmented with `sqrt(c) = sqrt(delta)` for one
//! degeneracy measure `c` at a time, the closed analysis is repeated at
//! `delta` and `delta / 4`, and the two value sets are extrapolated
//! linearly in `sqrt(delta)` to `delta = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::expr::{Expr, Tape};
use crate::lagrange::{build_lagrange, build_merit};
use crate::lsq::{self, LmConfig, TapeResiduals};
use crate::model::ParamKind;
use crate::nichepso::{self, ConfigError};
use crate::separation::SeparatedFunction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EndpointError {
    #[error("singularity analysis nested deeper than {max} (requested {depth})")]
    RecursionLimit { depth: usize, max: usize },
    #[error(transparent)]
    Swarm(#[from] ConfigError),
}

pub const MAX_SINGULAR_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closedness {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    LagrangeStationary,
    SingularLimit,
    DomainBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointCandidate {
    /// `+inf` only for the unbounded-domain sentinel.
    #[serde(with = "crate::ranges::finite_or_null")]
    pub value: f64,
    pub closedness: Closedness,
    pub origin: Origin,
    /// Reduced coordinates of a configuration attaining the value. Empty for
    /// domain bounds.
    #[serde(default)]
    pub witness: Vec<f64>,
    /// The witness touches the search box.
    #[serde(default)]
    pub at_box_boundary: bool,
    /// The value is shared by a sampled continuum of roots.
    #[serde(default)]
    pub continuum: bool,
    /// Degenerate line for singular limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<String>,
}

impl EndpointCandidate {
    pub fn domain_bound(value: f64) -> Self {
        EndpointCandidate {
            value,
            closedness: Closedness::Closed,
            origin: Origin::DomainBound,
            witness: Vec::new(),
            at_box_boundary: false,
            continuum: false,
            line: None,
        }
    }
}

/// Closed candidates with solver bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedAnalysis {
    pub candidates: Vec<EndpointCandidate>,
    pub roots: usize,
    pub continuum: bool,
    pub evaluations: usize,
}

fn on_box_boundary(x: &[f64], bounds: &[(f64, f64)]) -> bool {
    x.iter().zip(bounds).any(|(v, (lo, hi))| {
        let tol = 1e-6 * (hi - lo);
        (v - lo).abs() <= tol || (hi - v).abs() <= tol
    })
}

/// Values of `f` at every stationary point of `f` on `G = 0`, deduped.
pub fn closed_candidates(
    sf: &SeparatedFunction,
    cfg: &Config,
    seed: u64,
) -> Result<ClosedAnalysis, EndpointError> {
    let m = sf.m();
    let ls = build_lagrange(sf);
    let merit = build_merit(&ls);
    let lambda = cfg.swarm.lambda_bound;
    let mut bounds = sf.bounds.clone();
    bounds.extend(std::iter::repeat((-lambda, lambda)).take(ls.n));
    if bounds.is_empty() {
        return Ok(ClosedAnalysis {
            candidates: Vec::new(),
            roots: 0,
            continuum: false,
            evaluations: 0,
        });
    }
    let mut set = nichepso::solve(&merit, &cfg.swarm, &bounds, seed)?;
    let tol = cfg.endpoints.dedupe;
    set.flag_continuum(|x| sf.value(&x[..m]), tol);

    let delta = cfg.endpoints.delta;
    let mut valued: Vec<(f64, &nichepso::Root)> = set
        .roots
        .iter()
        .filter(|r| !is_singular(sf, &r.position[..m], delta))
        .filter_map(|r| sf.value(&r.position[..m]).map(|v| (v, r)))
        .filter(|(v, _)| v.is_finite())
        .collect();
    valued.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut candidates: Vec<EndpointCandidate> = Vec::new();
    for (v, root) in valued {
        let v = clamp_to_domain(v, sf.kind);
        if let Some(last) = candidates.last_mut() {
            if (v - last.value).abs() <= tol {
                last.continuum |= root.continuum;
                continue;
            }
        }
        candidates.push(EndpointCandidate {
            value: v,
            closedness: Closedness::Closed,
            origin: Origin::LagrangeStationary,
            witness: root.position[..m].to_vec(),
            at_box_boundary: on_box_boundary(&root.position[..m], &sf.bounds),
            continuum: root.continuum,
            line: None,
        });
    }
    Ok(ClosedAnalysis {
        candidates,
        roots: set.roots.len(),
        continuum: set.continuum,
        evaluations: set.evaluations,
    })
}

/// A point-defined line of `sf` is collapsed at `x`: stationarity there is an
/// artefact of the undefined line, covered by the open analysis.
fn is_singular(sf: &SeparatedFunction, x: &[f64], delta: f64) -> bool {
    sf.singular
        .iter()
        .any(|(_, c)| c.eval(x).is_ok_and(|v| v < delta))
}

/// Values of `f` at solutions of `G` where `f` is stationary on `G = 0`,
/// found by multistart least squares and a projected-gradient test.
pub fn stationary_values(sf: &SeparatedFunction, cfg: &Config) -> Vec<EndpointCandidate> {
    let m = sf.m();
    let n = sf.n();
    let mut outputs = vec![sf.f.clone()];
    outputs.extend(sf.g.iter().cloned());
    let full = Tape::compile(&outputs, m);
    let g_tape = Tape::compile(&sf.g, m);
    let mut problem = TapeResiduals::new(&g_tape);
    let lm = LmConfig {
        max_iterations: cfg.feasibility.max_iterations,
        target_cost: 1e-26,
        stall_ratio: 1e-4,
        stall_window: 10,
    };
    let mut dual = Vec::new();
    let mut values = vec![0.0; n + 1];
    let mut jac = vec![0.0; (n + 1) * m];
    let mut out: Vec<EndpointCandidate> = Vec::new();
    for x0 in sf.starts(cfg.feasibility.starts) {
        let res = if n == 0 {
            lsq::LmResult { x: x0, cost: 0.0, iterations: 0, evaluations: 0 }
        } else {
            lsq::minimize(&mut problem, &x0, &lm)
        };
        if !(res.cost < cfg.feasibility.efeas) || is_singular(sf, &res.x, cfg.endpoints.delta) {
            continue;
        }
        if full.jacobian(&res.x, &mut dual, &mut values, &mut jac).is_err() {
            continue;
        }
        let grad = DVector::from_column_slice(&jac[..m]);
        let scale = grad.norm();
        let residual = if n == 0 {
            scale
        } else {
            // least-squares multipliers: J^T lambda = -grad
            let jt = DMatrix::from_row_slice(n, m, &jac[m..]).transpose();
            match jt.clone().svd(true, true).solve(&(-&grad), 1e-12) {
                Ok(lambda) => (jt * lambda + &grad).norm(),
                Err(_) => continue,
            }
        };
        if residual > 1e-6 * scale.max(1.0) {
            continue;
        }
        let v = clamp_to_domain(values[0], sf.kind);
        if out.iter().any(|c| (c.value - v).abs() <= cfg.endpoints.dedupe) {
            continue;
        }
        out.push(EndpointCandidate {
            value: v,
            closedness: Closedness::Closed,
            origin: Origin::LagrangeStationary,
            at_box_boundary: on_box_boundary(&res.x, &sf.bounds),
            witness: res.x,
            continuum: false,
            line: None,
        });
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    out
}

fn clamp_to_domain(v: f64, kind: ParamKind) -> f64 {
    v.clamp(0.0, kind.upper_bound())
}

/// Whether `G` has a root in the search box, by multistart least squares.
pub fn is_solvable(g: &[Expr], m: usize, bounds: &[(f64, f64)], cfg: &Config) -> bool {
    if g.is_empty() {
        return true;
    }
    if g.iter().any(|e| e.as_const().is_some_and(|c| c != 0.0)) {
        return false;
    }
    let tape = Tape::compile(g, m);
    let mut problem = TapeResiduals::new(&tape);
    let starts = crate::faure::Faure::new(m.max(1));
    let starts = (1..=cfg.feasibility.starts as u64)
        .map(|i| crate::faure::scale_to_box(&starts.point(i), bounds));
    let lm = LmConfig {
        max_iterations: cfg.feasibility.max_iterations,
        target_cost: cfg.feasibility.efeas * 1e-2,
        ..LmConfig::default()
    };
    lsq::multistart(&mut problem, starts, &lm, cfg.feasibility.efeas)
        .is_some_and(|r| r.cost < cfg.feasibility.efeas)
}

/// Open candidates from each degeneracy measure in `terms` taken alone.
pub fn open_candidates(
    sf: &SeparatedFunction,
    terms: &[(String, Expr)],
    cfg: &Config,
    seed: u64,
) -> Result<Vec<EndpointCandidate>, EndpointError> {
    let depth = cfg.endpoints.singular_depth;
    if depth > MAX_SINGULAR_DEPTH {
        return Err(EndpointError::RecursionLimit {
            depth,
            max: MAX_SINGULAR_DEPTH,
        });
    }
    if depth == 0 {
        return Ok(Vec::new());
    }
    let delta = cfg.endpoints.delta;
    let mut out = Vec::new();
    for (k, (line, c)) in terms.iter().enumerate() {
        if c.as_const().is_some() {
            continue;
        }
        let at = |d: f64| {
            let mut aug = sf.augmented(c.sqrt() - d.sqrt());
            aug.singular.retain(|(l, _)| l != line);
            aug
        };
        let coarse = at(delta);
        if !is_solvable(&coarse.g, coarse.m(), &coarse.bounds, cfg) {
            log::debug!("line {line} cannot degenerate under G");
            continue;
        }
        let run_seed = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1));
        let mut inner = cfg.clone();
        inner.endpoints.singular_depth = depth - 1;
        let level = |aug: &SeparatedFunction, seed: u64| -> Result<Vec<EndpointCandidate>, EndpointError> {
            let mut found = stationary_values(aug, &inner);
            found.extend(closed_candidates(aug, &inner, seed)?.candidates);
            found.sort_by(|a, b| a.value.total_cmp(&b.value));
            found.dedup_by(|b, a| (b.value - a.value).abs() <= inner.endpoints.dedupe);
            Ok(found)
        };
        let v1 = level(&coarse, run_seed)?;
        let fine = at(delta / 4.0);
        let v2 = level(&fine, run_seed.wrapping_add(1))?;
        if depth > 1 {
            let nested: Vec<(String, Expr)> =
                terms.iter().filter(|(l, _)| l != line).cloned().collect();
            out.extend(open_candidates(&coarse, &nested, &inner, run_seed)?);
        }
        // values move by O(sqrt(delta)) between the two levels
        let reach = 4.0 * delta.sqrt() + cfg.endpoints.dedupe;
        for a in v1 {
            let partner = v2
                .iter()
                .filter(|b| (b.value - a.value).abs() <= reach)
                .min_by(|x, y| (x.value - a.value).abs().total_cmp(&(y.value - a.value).abs()));
            let value = match partner {
                Some(b) => 2.0 * b.value - a.value,
                None => a.value,
            };
            out.push(EndpointCandidate {
                value: clamp_to_domain(value, sf.kind),
                closedness: Closedness::Open,
                origin: Origin::SingularLimit,
                line: Some(line.clone()),
                ..a
            });
        }
    }
    Ok(out)
}

/// Sorted candidates with the domain bounds added. Within `tol`, closed
/// stationary values beat open ones and open ones beat domain bounds.
pub fn assemble_candidates(
    closed: &[EndpointCandidate],
    open: &[EndpointCandidate],
    kind: ParamKind,
    tol: f64,
) -> Vec<EndpointCandidate> {
    let mut all: Vec<EndpointCandidate> = Vec::new();
    all.push(EndpointCandidate::domain_bound(0.0));
    all.push(EndpointCandidate::domain_bound(kind.upper_bound()));
    all.extend(open.iter().cloned());
    all.extend(closed.iter().cloned());
    let rank = |c: &EndpointCandidate| match (c.origin, c.closedness) {
        (Origin::DomainBound, _) => 0,
        (_, Closedness::Open) => 1,
        (_, Closedness::Closed) => 2,
    };
    all.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out: Vec<EndpointCandidate> = Vec::new();
    for c in all {
        match out.last_mut() {
            Some(last) if c.value == last.value || (c.value - last.value).abs() <= tol => {
                if rank(&c) > rank(last) {
                    // domain bounds keep their exact value
                    let value = if last.origin == Origin::DomainBound {
                        last.value
                    } else {
                        c.value
                    };
                    *last = EndpointCandidate { value, ..c };
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// Closed and open candidates of `sf`, assembled.
pub fn candidates(
    sf: &SeparatedFunction,
    cfg: &Config,
    seed: u64,
) -> Result<(Vec<EndpointCandidate>, ClosedAnalysis), EndpointError> {
    let closed = closed_candidates(sf, cfg, seed)?;
    let open = open_candidates(sf, &sf.singular, cfg, seed.wrapping_add(0x5bd1_e995))?;
    let all = assemble_candidates(&closed.candidates, &open, sf.kind, cfg.endpoints.dedupe);
    Ok((all, closed))
}
