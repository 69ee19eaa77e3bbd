//! Entities, constraints and parameters of a 2D constraint system, and the
//! residual equations they generate.
//!
//! Every entity scalar owns one slot of the global coordinate vector `X`:
//!
//! | entity  | slots                  |
//! |---------|------------------------|
//! | point   | `x y`                  |
//! | line    | `a b c`, `ax+by+c = 0` |
//! | circle  | `x y r`                |
//! | ellipse | `cx cy ux uy a b`      |
//!
//! All expressions built here are over global slots.

mod file;

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use thiserror::Error;

use crate::config::Config;
use crate::expr::{self, Expr, ParseError};

pub use file::{parse_value, FileConstraint, FileEntity, FileParameter, FileSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("constraint '{constraint}' expects {expected}, found {found}")]
    ArityMismatch {
        constraint: String,
        expected: String,
        found: String,
    },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{name}': {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("expression '{text}': {source}")]
    Expression {
        text: String,
        #[source]
        source: ParseError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Point,
    Line,
    Circle,
    Ellipse,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Point => "point",
            EntityKind::Line => "line",
            EntityKind::Circle => "circle",
            EntityKind::Ellipse => "ellipse",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "point" => EntityKind::Point,
            "line" => EntityKind::Line,
            "circle" => EntityKind::Circle,
            "ellipse" => EntityKind::Ellipse,
            _ => return None,
        })
    }

    pub fn slot_names(self) -> &'static [&'static str] {
        match self {
            EntityKind::Point => &["x", "y"],
            EntityKind::Line => &["a", "b", "c"],
            EntityKind::Circle => &["x", "y", "r"],
            EntityKind::Ellipse => &["cx", "cy", "ux", "uy", "a", "b"],
        }
    }

    pub fn arity(self) -> usize {
        self.slot_names().len()
    }

    /// Has a distinguished centre or location in its first two slots.
    pub fn is_point_like(self) -> bool {
        !matches!(self, EntityKind::Line)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    /// Two point indices; lines only.
    pub through: Option<(usize, usize)>,
    /// Grounded slot values.
    pub fixed: Option<Vec<f64>>,
    /// First global slot.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Distance,
    Angle,
    Radius,
    Diameter,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Distance => "distance",
            ParamKind::Angle => "angle",
            ParamKind::Radius => "radius",
            ParamKind::Diameter => "diameter",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "distance" => ParamKind::Distance,
            "angle" => ParamKind::Angle,
            "radius" => ParamKind::Radius,
            "diameter" => ParamKind::Diameter,
            _ => return None,
        })
    }

    pub fn is_angle(self) -> bool {
        self == ParamKind::Angle
    }

    /// Upper domain bound: `pi` for angles, `+inf` for lengths.
    pub fn upper_bound(self) -> f64 {
        if self.is_angle() {
            PI
        } else {
            f64::INFINITY
        }
    }

    pub fn contains(self, value: f64) -> bool {
        value >= 0.0 && value <= self.upper_bound()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DimensionalKind {
    PointPointDistance,
    PointLineDistance,
    LineLineDistance,
    Angle,
    Radius,
    Diameter,
}

impl DimensionalKind {
    pub fn param_kind(self) -> ParamKind {
        match self {
            DimensionalKind::PointPointDistance
            | DimensionalKind::PointLineDistance
            | DimensionalKind::LineLineDistance => ParamKind::Distance,
            DimensionalKind::Angle => ParamKind::Angle,
            DimensionalKind::Radius => ParamKind::Radius,
            DimensionalKind::Diameter => ParamKind::Diameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructuralKind {
    PointCoincident,
    LineCoincident,
    PointOnLine,
    PointOnCircle,
    PointOnEllipse,
    Parallel,
    Perpendicular,
    LineCircleTangent,
    CircleTangentInternal,
    CircleTangentExternal,
    Concentric,
    Symmetric,
}

impl StructuralKind {
    pub fn equation_count(self) -> usize {
        match self {
            StructuralKind::PointCoincident
            | StructuralKind::LineCoincident
            | StructuralKind::Concentric
            | StructuralKind::Symmetric => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Constraint {
    Dimensional {
        kind: DimensionalKind,
        entities: Vec<usize>,
        parameter: usize,
    },
    Structural {
        kind: StructuralKind,
        entities: Vec<usize>,
    },
    /// `expr` is over parameter indices.
    Algebraic { text: String, expr: Expr },
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub entities: Vec<Entity>,
    pub constraints: Vec<Constraint>,
    pub parameters: Vec<Parameter>,
    /// Overrides from the file's `"solver"` section.
    pub solver: Option<Config>,
    n_slots: usize,
    entity_index: HashMap<String, usize>,
    param_index: HashMap<String, usize>,
    /// parameter index -> defining constraint index
    definition: Vec<usize>,
}

/// A line defined through two points, and its degeneracy measure
/// `(x1-x2)^2 + (y1-y2)^2`.
#[derive(Debug, Clone)]
pub struct SingularTerm {
    pub line: String,
    pub expr: Expr,
}

fn var(slot: usize) -> Expr {
    Expr::var(slot)
}

impl ConstraintSystem {
    pub(crate) fn assemble(
        entities: Vec<Entity>,
        constraints: Vec<Constraint>,
        parameters: Vec<Parameter>,
        solver: Option<Config>,
    ) -> Result<Self, ModelError> {
        let entity_index = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        let param_index: HashMap<String, usize> = parameters
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        let n_slots = entities.iter().map(|e| e.kind.arity()).sum();
        let mut definition = vec![usize::MAX; parameters.len()];
        for (ci, c) in constraints.iter().enumerate() {
            if let Constraint::Dimensional {
                kind, parameter, ..
            } = c
            {
                let p = &parameters[*parameter];
                if definition[*parameter] != usize::MAX {
                    return Err(ModelError::InvalidParameter {
                        name: p.name.clone(),
                        reason: "defined by more than one dimensional constraint".into(),
                    });
                }
                if kind.param_kind() != p.kind {
                    return Err(ModelError::InvalidParameter {
                        name: p.name.clone(),
                        reason: format!(
                            "declared {} but constrains a {}",
                            p.kind.name(),
                            kind.param_kind().name()
                        ),
                    });
                }
                definition[*parameter] = ci;
            }
        }
        for (i, p) in parameters.iter().enumerate() {
            if definition[i] == usize::MAX {
                return Err(ModelError::InvalidParameter {
                    name: p.name.clone(),
                    reason: "no dimensional constraint defines it".into(),
                });
            }
        }
        Ok(ConstraintSystem {
            entities,
            constraints,
            parameters,
            solver,
            n_slots,
            entity_index,
            param_index,
            definition,
        })
    }

    /// Parses and validates a system from its JSON text.
    pub fn load(text: &str) -> Result<Self, ModelError> {
        let file: FileSystem =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.build()
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Parse(format!("{}: {e}", path.display())))?;
        Self::load(&text)
    }

    pub fn to_file(&self) -> FileSystem {
        FileSystem::from_system(self)
    }

    pub fn save(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("system serializes")
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entity_index.get(id).map(|&i| &self.entities[i])
    }

    pub fn entity_position(&self, id: &str) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.param_index.get(name).map(|&i| &self.parameters[i])
    }

    pub fn parameter_position(&self, name: &str) -> Option<usize> {
        self.param_index.get(name).copied()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    /// Current values of every parameter that has one.
    pub fn current_values(&self) -> BTreeMap<String, f64> {
        self.parameters
            .iter()
            .filter_map(|p| p.value.map(|v| (p.name.clone(), v)))
            .collect()
    }

    /// The dimensional constraint that defines parameter `name`.
    pub fn definition_of(&self, name: &str) -> Option<&Constraint> {
        self.parameter_position(name)
            .map(|i| &self.constraints[self.definition[i]])
    }

    /// Entity id and coordinate name of a global slot.
    pub fn slot_label(&self, slot: usize) -> (String, &'static str) {
        for e in &self.entities {
            if slot < e.offset + e.kind.arity() {
                return (e.id.clone(), e.kind.slot_names()[slot - e.offset]);
            }
        }
        panic!("slot {slot} out of range");
    }

    /// Values of grounded slots.
    pub fn grounded_slots(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_slots];
        for e in &self.entities {
            if let Some(values) = &e.fixed {
                for (k, v) in values.iter().enumerate() {
                    out[e.offset + k] = Some(*v);
                }
            }
        }
        out
    }

    pub fn is_grounded(&self) -> bool {
        self.entities.iter().any(|e| e.fixed.is_some())
    }

    fn slots(&self, entity: usize) -> Vec<Expr> {
        let e = &self.entities[entity];
        (0..e.kind.arity()).map(|k| var(e.offset + k)).collect()
    }

    fn xy(&self, entity: usize) -> (Expr, Expr) {
        let s = self.slots(entity);
        (s[0].clone(), s[1].clone())
    }

    fn abc(&self, entity: usize) -> (Expr, Expr, Expr) {
        let s = self.slots(entity);
        (s[0].clone(), s[1].clone(), s[2].clone())
    }

    /// The geometric function `f(X)` measured by parameter `name`: a
    /// distance, `acos` of a normal-vector cosine, a radius or a diameter.
    pub fn parameter_function(&self, name: &str) -> Result<Expr, ModelError> {
        let c = self
            .definition_of(name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
        let Constraint::Dimensional { kind, entities, .. } = c else {
            unreachable!("definitions are dimensional");
        };
        Ok(self.measure(*kind, entities))
    }

    /// Inner expression of an angle parameter: the cosine of the angle.
    pub fn angle_cosine(&self, entities: &[usize]) -> Expr {
        let (a1, b1, _) = self.abc(entities[0]);
        let (a2, b2, _) = self.abc(entities[1]);
        let dot = &a1 * &a2 + &b1 * &b2;
        let n1 = (a1.powi(2) + b1.powi(2)).sqrt();
        let n2 = (a2.powi(2) + b2.powi(2)).sqrt();
        dot / (n1 * n2)
    }

    fn measure(&self, kind: DimensionalKind, entities: &[usize]) -> Expr {
        match kind {
            DimensionalKind::PointPointDistance => {
                let (x1, y1) = self.xy(entities[0]);
                let (x2, y2) = self.xy(entities[1]);
                ((&x1 - &x2).powi(2) + (&y1 - &y2).powi(2)).sqrt()
            }
            DimensionalKind::PointLineDistance => {
                let (x, y) = self.xy(entities[0]);
                let (a, b, c) = self.abc(entities[1]);
                let u = &a * &x + &b * &y + c;
                (u.powi(2) / (a.powi(2) + b.powi(2))).sqrt()
            }
            DimensionalKind::LineLineDistance => {
                let (a1, b1, c1) = self.abc(entities[0]);
                let (_, _, c2) = self.abc(entities[1]);
                ((&c1 - &c2).powi(2) / (a1.powi(2) + b1.powi(2))).sqrt()
            }
            DimensionalKind::Angle => self.angle_cosine(entities).acos(),
            DimensionalKind::Radius => self.slots(entities[0])[2].clone(),
            DimensionalKind::Diameter => self.slots(entities[0])[2].clone() * 2.0,
        }
    }

    /// Side conditions a dimensional constraint carries regardless of its
    /// parameter's value: line-line distance requires equal normals.
    fn side_conditions(&self, kind: DimensionalKind, entities: &[usize]) -> Vec<Expr> {
        match kind {
            DimensionalKind::LineLineDistance => {
                let (a1, b1, _) = self.abc(entities[0]);
                let (a2, b2, _) = self.abc(entities[1]);
                vec![a1 - a2, b1 - b2]
            }
            _ => Vec::new(),
        }
    }

    /// Residual of a dimensional constraint with its parameter fixed at `p`.
    fn dimensional_residual(&self, kind: DimensionalKind, entities: &[usize], p: f64) -> Expr {
        match kind {
            DimensionalKind::Angle => self.angle_cosine(entities) - p.cos(),
            _ => self.measure(kind, entities) - p,
        }
    }

    fn structural_residuals(&self, kind: StructuralKind, e: &[usize]) -> Vec<Expr> {
        match kind {
            StructuralKind::PointCoincident | StructuralKind::Concentric => {
                let (x1, y1) = self.xy(e[0]);
                let (x2, y2) = self.xy(e[1]);
                vec![x1 - x2, y1 - y2]
            }
            StructuralKind::LineCoincident => {
                let (a1, b1, c1) = self.abc(e[0]);
                let (a2, b2, c2) = self.abc(e[1]);
                vec![&a1 * &b2 - &a2 * &b1, &c1 * &a2 - &c2 * &a1]
            }
            StructuralKind::PointOnLine => vec![self.on_line(e[0], e[1])],
            StructuralKind::PointOnCircle => {
                let (x, y) = self.xy(e[0]);
                let s = self.slots(e[1]);
                vec![&s[2] - &((&x - &s[0]).powi(2) + (&y - &s[1]).powi(2)).sqrt()]
            }
            StructuralKind::PointOnEllipse => {
                let (x, y) = self.xy(e[0]);
                let s = self.slots(e[1]);
                let (dx, dy) = (&x - &s[0], &y - &s[1]);
                let u = &dx * &s[2] + &dy * &s[3];
                let v = &dy * &s[2] - &dx * &s[3];
                let (a2, b2) = (s[4].powi(2), s[5].powi(2));
                vec![&b2 * &u.powi(2) + &a2 * &v.powi(2) - &a2 * &b2]
            }
            StructuralKind::Parallel => {
                let (a1, b1, _) = self.abc(e[0]);
                let (a2, b2, _) = self.abc(e[1]);
                vec![&a1 * &b2 - &a2 * &b1]
            }
            StructuralKind::Perpendicular => {
                let (a1, b1, _) = self.abc(e[0]);
                let (a2, b2, _) = self.abc(e[1]);
                vec![&a1 * &a2 + &b1 * &b2]
            }
            StructuralKind::LineCircleTangent => {
                let (a, b, c) = self.abc(e[0]);
                let s = self.slots(e[1]);
                let u = &a * &s[0] + &b * &s[1] + c;
                vec![&s[2] - &(u.powi(2) / (a.powi(2) + b.powi(2))).sqrt()]
            }
            StructuralKind::CircleTangentInternal | StructuralKind::CircleTangentExternal => {
                let s1 = self.slots(e[0]);
                let s2 = self.slots(e[1]);
                let d2 = (&s1[0] - &s2[0]).powi(2) + (&s1[1] - &s2[1]).powi(2);
                let r = if kind == StructuralKind::CircleTangentInternal {
                    &s1[2] - &s2[2]
                } else {
                    &s1[2] + &s2[2]
                };
                vec![d2 - r.powi(2)]
            }
            StructuralKind::Symmetric => {
                let (x1, y1) = self.xy(e[0]);
                let (x2, y2) = self.xy(e[1]);
                let (a, b, c) = self.abc(e[2]);
                let mid = &a * &((&x1 + &x2) * 0.5) + &b * &((&y1 + &y2) * 0.5) + c;
                let perp = (&x2 - &x1) * b - (&y2 - &y1) * a;
                vec![mid, perp]
            }
        }
    }

    fn on_line(&self, point: usize, line: usize) -> Expr {
        let (x, y) = self.xy(point);
        let (a, b, c) = self.abc(line);
        a * x + b * y + c
    }

    /// Residuals that hold whatever the parameter values: structural
    /// constraints, lines through points, side conditions of dimensional
    /// constraints, and vector normalizations.
    pub fn structural_set(&self) -> Vec<Expr> {
        let mut out = Vec::new();
        for c in &self.constraints {
            match c {
                Constraint::Structural { kind, entities } => {
                    out.extend(self.structural_residuals(*kind, entities))
                }
                Constraint::Dimensional { kind, entities, .. } => {
                    out.extend(self.side_conditions(*kind, entities))
                }
                Constraint::Algebraic { .. } => {}
            }
        }
        for (i, e) in self.entities.iter().enumerate() {
            if let Some((p1, p2)) = e.through {
                out.push(self.on_line(p1, i));
                out.push(self.on_line(p2, i));
            }
        }
        for e in &self.entities {
            match e.kind {
                EntityKind::Line => {
                    out.push(var(e.offset).powi(2) + var(e.offset + 1).powi(2) - 1.0)
                }
                EntityKind::Ellipse => {
                    out.push(var(e.offset + 2).powi(2) + var(e.offset + 3).powi(2) - 1.0)
                }
                _ => {}
            }
        }
        out
    }

    /// Residual equations with the parameters in `fixed` substituted.
    ///
    /// Dimensional constraints of parameters not in `fixed` are omitted.
    /// Algebraic constraints see fixed parameters as constants and every
    /// other parameter as its geometric function.
    pub fn residuals(&self, fixed: &BTreeMap<String, f64>) -> Result<Vec<Expr>, ModelError> {
        for name in fixed.keys() {
            if self.parameter(name).is_none() {
                return Err(ModelError::UnknownParameter(name.clone()));
            }
        }
        let mut out = self.structural_set();
        for c in &self.constraints {
            if let Constraint::Dimensional {
                kind,
                entities,
                parameter,
            } = c
            {
                if let Some(&p) = fixed.get(&self.parameters[*parameter].name) {
                    out.push(self.dimensional_residual(*kind, entities, p));
                }
            }
        }
        out.extend(self.algebraic_residuals(fixed)?);
        Ok(out)
    }

    pub fn algebraic_residuals(
        &self,
        fixed: &BTreeMap<String, f64>,
    ) -> Result<Vec<Expr>, ModelError> {
        let mut functions: Vec<Option<Expr>> = vec![None; self.parameters.len()];
        let mut out = Vec::new();
        for c in &self.constraints {
            let Constraint::Algebraic { expr, .. } = c else {
                continue;
            };
            for (i, p) in self.parameters.iter().enumerate() {
                if functions[i].is_none() && !fixed.contains_key(&p.name) && expr.depends_on(i) {
                    functions[i] = Some(self.parameter_function(&p.name)?);
                }
            }
            let substituted = expr.substitute(&|i| {
                let p = &self.parameters[i];
                match fixed.get(&p.name) {
                    Some(&v) => Expr::constant(v),
                    None => functions[i].clone().expect("function prepared"),
                }
            });
            out.push(substituted.simplify());
        }
        Ok(out)
    }

    /// Degeneracy measures of every line defined through two points.
    pub fn singularity_terms(&self) -> Vec<SingularTerm> {
        self.entities
            .iter()
            .filter_map(|e| {
                let (p1, p2) = e.through?;
                let (x1, y1) = self.xy(p1);
                let (x2, y2) = self.xy(p2);
                Some(SingularTerm {
                    line: e.id.clone(),
                    expr: (x1 - x2).powi(2) + (y1 - y2).powi(2),
                })
            })
            .collect()
    }

    /// Number of scalar residuals `residuals(fixed)` produces, counted from
    /// the constraint list alone.
    pub fn expected_residual_count(&self, fixed: &BTreeMap<String, f64>) -> usize {
        let mut n = 0;
        for c in &self.constraints {
            n += match c {
                Constraint::Structural { kind, .. } => kind.equation_count(),
                Constraint::Dimensional {
                    kind, parameter, ..
                } => {
                    let side = if *kind == DimensionalKind::LineLineDistance { 2 } else { 0 };
                    side + usize::from(fixed.contains_key(&self.parameters[*parameter].name))
                }
                Constraint::Algebraic { .. } => 1,
            };
        }
        for e in &self.entities {
            n += match e.kind {
                EntityKind::Line => 1 + if e.through.is_some() { 2 } else { 0 },
                EntityKind::Ellipse => 1,
                _ => 0,
            };
        }
        n
    }

    /// Largest length among `fixed` and grounded coordinates, at least 1.
    pub fn length_scale(&self, fixed: &BTreeMap<String, f64>) -> f64 {
        let mut s: f64 = 1.0;
        for (name, v) in fixed {
            if let Some(p) = self.parameter(name) {
                if !p.kind.is_angle() {
                    s = s.max(v.abs());
                }
            }
        }
        for e in &self.entities {
            if let Some(values) = &e.fixed {
                for v in values {
                    s = s.max(v.abs());
                }
            }
        }
        s
    }

    /// Copy of the system with parameter `name` set to `value`.
    pub fn with_value(&self, name: &str, value: f64) -> Result<Self, ModelError> {
        let i = self
            .parameter_position(name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
        let mut out = self.clone();
        out.parameters[i].value = Some(value);
        Ok(out)
    }

    /// Evaluates every parameter function at a global configuration.
    pub fn measure_all(&self, x: &[f64]) -> BTreeMap<String, f64> {
        self.parameters
            .iter()
            .filter_map(|p| {
                let f = self.parameter_function(&p.name).ok()?;
                f.eval(x).ok().map(|v| (p.name.clone(), v))
            })
            .collect()
    }
}

/// Parses algebraic constraint text over the names in `parameters`.
pub fn parse_algebraic(text: &str, parameters: &[Parameter]) -> Result<Expr, ModelError> {
    let names: Vec<&str> = parameters.iter().map(|p| p.name.as_str()).collect();
    expr::parse(text, &|name| names.iter().position(|n| *n == name)).map_err(|source| match source {
        ParseError::UnknownIdentifier(name) => ModelError::UnknownParameter(name),
        source => ModelError::Expression {
            text: text.to_string(),
            source,
        },
    })
}
