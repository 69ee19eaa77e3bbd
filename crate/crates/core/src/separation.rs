//! The target parameter as `p = f(X)` subject to `G(X) = 0`.
//!
//! `G` holds every residual that stays in force while the target varies:
//! structural equations, normalizations, fixed dimensions and algebraic
//! relations. Dimensional residuals of the target and of unassigned
//! variables are left out.
//!
//! Grounded slots and gauge pins are eliminated by substitution, so the
//! free coordinates form a reduced vector of length `m`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::config::Config;
use crate::expr::{Expr, Node, Tape};
use crate::faure::{scale_to_box, Faure};
use crate::lsq::{self, LmConfig, TapeResiduals};
use crate::model::{ConstraintSystem, EntityKind, ModelError, ParamKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeparationError {
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameters must split into target, fixed and unassigned: {0}")]
    NotAPartition(String),
    #[error("parameter '{0}' has no value to fix")]
    MissingValue(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    /// Index into the reduced coordinate vector.
    Free(usize),
    Pinned(f64),
}

/// A slot pinned to remove rigid-motion freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugePin {
    pub entity: String,
    pub coordinate: &'static str,
    pub slot: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SeparatedFunction {
    pub target: String,
    pub kind: ParamKind,
    /// Over the reduced coordinates; `acos`-wrapped for angles.
    pub f: Expr,
    pub g: Vec<Expr>,
    pub gauge: Vec<GaugePin>,
    /// Set when a gauge pin was dropped because it conflicted with `G`.
    pub gauge_dropped: bool,
    /// Global slot of each reduced coordinate.
    pub layout: Vec<usize>,
    pub bindings: Vec<Binding>,
    /// Search box of each reduced coordinate.
    pub bounds: Vec<(f64, f64)>,
    /// Largest fixed length, at least 1.
    pub scale: f64,
    /// Degeneracy measures of point-defined lines, reduced.
    pub singular: Vec<(String, Expr)>,
}

impl SeparatedFunction {
    pub fn m(&self) -> usize {
        self.layout.len()
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// Rewrites a global-slot expression over the reduced coordinates.
    pub fn localize(&self, e: &Expr) -> Expr {
        localize(&self.bindings, e)
    }

    /// Global coordinate vector of a reduced one.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.bindings
            .iter()
            .map(|b| match *b {
                Binding::Free(i) => reduced[i],
                Binding::Pinned(v) => v,
            })
            .collect()
    }

    /// Residual tying `f` to the value `p`. Angle targets compare cosines.
    pub fn target_residual(&self, p: f64) -> Expr {
        match self.f.node() {
            Node::Acos(inner) if self.kind.is_angle() => inner - &Expr::constant(p.cos()),
            _ => &self.f - &Expr::constant(p),
        }
    }

    /// `f(x)`, or `None` outside the domain.
    pub fn value(&self, reduced: &[f64]) -> Option<f64> {
        self.f.eval(reduced).ok()
    }

    /// Copy with `extra` appended to `G`.
    pub fn augmented(&self, extra: Expr) -> SeparatedFunction {
        let mut out = self.clone();
        out.g.push(extra);
        out
    }

    /// Starting points for local solves: Faure points in the search box.
    pub fn starts(&self, count: usize) -> Vec<Vec<f64>> {
        let faure = Faure::new(self.m().max(1));
        (1..=count as u64)
            .map(|i| scale_to_box(&faure.point(i), &self.bounds))
            .collect()
    }
}

fn localize(bindings: &[Binding], e: &Expr) -> Expr {
    e.substitute(&|slot| match bindings[slot] {
        Binding::Free(i) => Expr::var(i),
        Binding::Pinned(v) => Expr::constant(v),
    })
    .simplify()
}

/// Separates `target` with the parameters in `fixed` held at their values
/// and those in `unassigned` free.
pub fn separate(
    sys: &ConstraintSystem,
    target: &str,
    fixed: &BTreeMap<String, f64>,
    unassigned: &BTreeSet<String>,
    cfg: &Config,
) -> Result<SeparatedFunction, SeparationError> {
    let param = sys
        .parameter(target)
        .ok_or_else(|| SeparationError::UnknownParameter(target.to_string()))?;
    for name in fixed.keys().chain(unassigned) {
        if sys.parameter(name).is_none() {
            return Err(SeparationError::UnknownParameter(name.clone()));
        }
    }
    if fixed.contains_key(target) || unassigned.contains(target) {
        return Err(SeparationError::NotAPartition(format!(
            "target '{target}' is also fixed or unassigned"
        )));
    }
    for name in sys.parameter_names() {
        let count = usize::from(name == target)
            + usize::from(fixed.contains_key(&name))
            + usize::from(unassigned.contains(&name));
        if count != 1 {
            return Err(SeparationError::NotAPartition(format!(
                "'{name}' must be exactly one of target, fixed or unassigned"
            )));
        }
    }

    let f_global = sys.parameter_function(target)?;
    let g_global = sys.residuals(fixed)?;
    let scale = sys.length_scale(fixed);
    let half_width = (cfg.swarm.box_factor * scale).max(cfg.swarm.box_min);

    let grounded = sys.grounded_slots();
    let mut pins: Vec<GaugePin> = Vec::new();
    if cfg.gauge.enabled && !sys.is_grounded() {
        let mut point_like = sys.entities.iter().filter(|e| e.kind.is_point_like());
        if let Some(first) = point_like.next() {
            let names = first.kind.slot_names();
            for k in 0..2 {
                pins.push(GaugePin {
                    entity: first.id.clone(),
                    coordinate: names[k],
                    slot: first.offset + k,
                    value: 0.0,
                });
            }
            if let Some(second) = point_like.next() {
                pins.push(GaugePin {
                    entity: second.id.clone(),
                    coordinate: second.kind.slot_names()[1],
                    slot: second.offset + 1,
                    value: 0.0,
                });
            }
        }
    }

    let build = |pins: &[GaugePin]| {
        let mut bindings = Vec::with_capacity(sys.n_slots());
        let mut layout = Vec::new();
        for (slot, ground) in grounded.iter().enumerate() {
            if let Some(v) = ground {
                bindings.push(Binding::Pinned(*v));
            } else if let Some(pin) = pins.iter().find(|p| p.slot == slot) {
                bindings.push(Binding::Pinned(pin.value));
            } else {
                bindings.push(Binding::Free(layout.len()));
                layout.push(slot);
            }
        }
        let g: Vec<Expr> = g_global
            .iter()
            .map(|e| localize(&bindings, e))
            .filter(|e| e.as_const() != Some(0.0))
            .collect();
        (bindings, layout, g)
    };

    let (mut bindings, mut layout, mut g) = build(&pins);
    let mut gauge_dropped = false;
    if cfg.gauge.probe && pins.len() == 3 {
        let solvable = |layout: &[usize], g: &[Expr]| {
            let bounds = slot_bounds(sys, layout, half_width);
            probe(g, layout.len(), &bounds, cfg)
        };
        if !solvable(&layout, &g) {
            let (b2, l2, g2) = build(&pins[..2]);
            if solvable(&l2, &g2) {
                log::info!("gauge pin on {} dropped: it conflicts with G", pins[2].entity);
                pins.truncate(2);
                (bindings, layout, g) = (b2, l2, g2);
                gauge_dropped = true;
            }
        }
    }

    let bounds = slot_bounds(sys, &layout, half_width);
    let f = localize(&bindings, &f_global);
    let singular = sys
        .singularity_terms()
        .into_iter()
        .map(|t| (t.line, localize(&bindings, &t.expr)))
        .collect();
    Ok(SeparatedFunction {
        target: target.to_string(),
        kind: param.kind,
        f,
        g,
        gauge: pins,
        gauge_dropped,
        layout,
        bindings,
        bounds,
        scale,
        singular,
    })
}

fn slot_bounds(sys: &ConstraintSystem, layout: &[usize], half_width: f64) -> Vec<(f64, f64)> {
    layout
        .iter()
        .map(|&slot| {
            let (id, coord) = sys.slot_label(slot);
            let kind = sys.entity(&id).map(|e| e.kind);
            match (kind, coord) {
                (Some(EntityKind::Line), "a" | "b") => (-1.0, 1.0),
                (Some(EntityKind::Ellipse), "ux" | "uy") => (-1.0, 1.0),
                (Some(EntityKind::Circle), "r") | (Some(EntityKind::Ellipse), "a" | "b") => {
                    (0.0, half_width)
                }
                _ => (-half_width, half_width),
            }
        })
        .collect()
}

/// Quick solvability check of `G` alone.
fn probe(g: &[Expr], m: usize, bounds: &[(f64, f64)], cfg: &Config) -> bool {
    if g.is_empty() {
        return true;
    }
    let tape = Tape::compile(g, m);
    let mut problem = TapeResiduals::new(&tape);
    let faure = Faure::new(m.max(1));
    let starts = (1..=8u64).map(|i| scale_to_box(&faure.point(i), bounds));
    let lm = LmConfig {
        max_iterations: cfg.feasibility.max_iterations,
        target_cost: cfg.feasibility.efeas * 1e-2,
        ..LmConfig::default()
    };
    lsq::multistart(&mut problem, starts, &lm, cfg.feasibility.efeas)
        .is_some_and(|r| r.cost < cfg.feasibility.efeas)
}
