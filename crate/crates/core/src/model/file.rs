//! JSON schema of a constraint system file.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    parse_algebraic, Constraint, ConstraintSystem, DimensionalKind, Entity, EntityKind,
    ModelError, ParamKind, Parameter, StructuralKind,
};
use crate::config::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSystem {
    pub entities: Vec<FileEntity>,
    #[serde(default)]
    pub constraints: Vec<FileConstraint>,
    #[serde(default)]
    pub parameters: Vec<FileParameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<Config>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntity {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub through: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileConstraint {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub between: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileParameter {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

/// Parses a parameter value: a number, or a string with an optional
/// `deg` or `rad` suffix. Angles are returned in radians.
pub fn parse_value(value: &Value, kind: ParamKind) -> Result<f64, String> {
    match value {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("bad number {n}")),
        Value::String(s) => {
            let s = s.trim();
            let (number, scale) = if let Some(v) = s.strip_suffix("deg") {
                if !kind.is_angle() {
                    return Err(format!("unit 'deg' on a {} parameter", kind.name()));
                }
                (v, std::f64::consts::PI / 180.0)
            } else if let Some(v) = s.strip_suffix("rad") {
                (v, 1.0)
            } else {
                (s, 1.0)
            };
            number
                .trim()
                .parse::<f64>()
                .map(|v| v * scale)
                .map_err(|_| format!("cannot parse '{s}' as a value"))
        }
        other => Err(format!("expected a number or string, found {other}")),
    }
}

struct Resolver<'a> {
    ids: &'a [Entity],
}

impl Resolver<'_> {
    fn find(&self, id: &str) -> Result<usize, ModelError> {
        self.ids
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| ModelError::UnknownEntity(id.to_string()))
    }
}

fn arity_error(c: &FileConstraint, expected: &str, kinds: &[EntityKind]) -> ModelError {
    let found = if kinds.is_empty() {
        "no entities".to_string()
    } else {
        kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    };
    ModelError::ArityMismatch {
        constraint: c.kind.clone(),
        expected: expected.to_string(),
        found,
    }
}

impl FileSystem {
    pub fn build(&self) -> Result<ConstraintSystem, ModelError> {
        let mut seen = HashSet::new();
        let mut entities = Vec::with_capacity(self.entities.len());
        let mut offset = 0;
        for fe in &self.entities {
            if !seen.insert(fe.id.clone()) {
                return Err(ModelError::DuplicateId(fe.id.clone()));
            }
            let kind = EntityKind::from_name(&fe.kind).ok_or_else(|| {
                ModelError::Parse(format!("entity '{}': unknown type '{}'", fe.id, fe.kind))
            })?;
            if let Some(values) = &fe.fixed {
                if values.len() != kind.arity() {
                    return Err(ModelError::Parse(format!(
                        "entity '{}': 'fixed' needs {} values",
                        fe.id,
                        kind.arity()
                    )));
                }
            }
            entities.push(Entity {
                id: fe.id.clone(),
                kind,
                through: None,
                fixed: fe.fixed.clone(),
                offset,
            });
            offset += kind.arity();
        }

        for (i, fe) in self.entities.iter().enumerate() {
            let Some(through) = &fe.through else { continue };
            let resolver = Resolver { ids: &entities };
            let refs = through
                .iter()
                .map(|id| resolver.find(id))
                .collect::<Result<Vec<_>, _>>()?;
            let kinds: Vec<EntityKind> = refs.iter().map(|&r| entities[r].kind).collect();
            if entities[i].kind != EntityKind::Line
                || kinds != [EntityKind::Point, EntityKind::Point]
            {
                return Err(ModelError::ArityMismatch {
                    constraint: format!("{} through", fe.id),
                    expected: "a line through two points".into(),
                    found: kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
                });
            }
            entities[i].through = Some((refs[0], refs[1]));
        }

        let mut parameters = Vec::with_capacity(self.parameters.len());
        let mut names = HashSet::new();
        for fp in &self.parameters {
            if !names.insert(fp.name.clone()) || seen.contains(&fp.name) {
                return Err(ModelError::DuplicateId(fp.name.clone()));
            }
            let kind = ParamKind::from_name(&fp.kind).ok_or_else(|| ModelError::InvalidParameter {
                name: fp.name.clone(),
                reason: format!("unknown kind '{}'", fp.kind),
            })?;
            let value = match &fp.value {
                None | Some(Value::Null) => None,
                Some(v) => Some(parse_value(v, kind).map_err(|reason| {
                    ModelError::InvalidParameter {
                        name: fp.name.clone(),
                        reason,
                    }
                })?),
            };
            if let Some(v) = value {
                if !kind.contains(v) {
                    return Err(ModelError::InvalidParameter {
                        name: fp.name.clone(),
                        reason: format!("value {v} outside the {} domain", kind.name()),
                    });
                }
            }
            parameters.push(Parameter {
                name: fp.name.clone(),
                kind,
                value,
            });
        }

        let resolver = Resolver { ids: &entities };
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for fc in &self.constraints {
            constraints.push(build_constraint(fc, &resolver, &entities, &parameters)?);
        }
        ConstraintSystem::assemble(entities, constraints, parameters, self.solver.clone())
    }

    pub fn from_system(sys: &ConstraintSystem) -> FileSystem {
        let entities = sys
            .entities
            .iter()
            .map(|e| FileEntity {
                id: e.id.clone(),
                kind: e.kind.name().to_string(),
                through: e.through.map(|(a, b)| {
                    vec![sys.entities[a].id.clone(), sys.entities[b].id.clone()]
                }),
                fixed: e.fixed.clone(),
            })
            .collect();
        let ids = |list: &[usize]| -> Vec<String> {
            list.iter().map(|&i| sys.entities[i].id.clone()).collect()
        };
        let constraints = sys
            .constraints
            .iter()
            .map(|c| match c {
                Constraint::Dimensional {
                    kind,
                    entities,
                    parameter,
                } => FileConstraint {
                    kind: dimensional_name(*kind).to_string(),
                    between: ids(entities),
                    parameter: Some(sys.parameters[*parameter].name.clone()),
                    expression: None,
                },
                Constraint::Structural { kind, entities } => FileConstraint {
                    kind: structural_name(*kind).to_string(),
                    between: ids(entities),
                    parameter: None,
                    expression: None,
                },
                Constraint::Algebraic { text, .. } => FileConstraint {
                    kind: "algebraic".into(),
                    between: Vec::new(),
                    parameter: None,
                    expression: Some(text.clone()),
                },
            })
            .collect();
        let parameters = sys
            .parameters
            .iter()
            .map(|p| FileParameter {
                name: p.name.clone(),
                kind: p.kind.name().to_string(),
                value: p.value.map(Value::from),
            })
            .collect();
        FileSystem {
            entities,
            constraints,
            parameters,
            solver: sys.solver.clone(),
        }
    }
}

fn dimensional_name(kind: DimensionalKind) -> &'static str {
    match kind {
        DimensionalKind::PointPointDistance
        | DimensionalKind::PointLineDistance
        | DimensionalKind::LineLineDistance => "distance",
        DimensionalKind::Angle => "angle",
        DimensionalKind::Radius => "radius",
        DimensionalKind::Diameter => "diameter",
    }
}

fn structural_name(kind: StructuralKind) -> &'static str {
    match kind {
        StructuralKind::PointCoincident | StructuralKind::LineCoincident => "coincident",
        StructuralKind::PointOnLine
        | StructuralKind::PointOnCircle
        | StructuralKind::PointOnEllipse => "on",
        StructuralKind::Parallel => "parallel",
        StructuralKind::Perpendicular => "perpendicular",
        StructuralKind::LineCircleTangent => "tangent",
        StructuralKind::CircleTangentInternal => "tangent_internal",
        StructuralKind::CircleTangentExternal => "tangent_external",
        StructuralKind::Concentric => "concentric",
        StructuralKind::Symmetric => "symmetric",
    }
}

fn build_constraint(
    fc: &FileConstraint,
    resolver: &Resolver<'_>,
    entities: &[Entity],
    parameters: &[Parameter],
) -> Result<Constraint, ModelError> {
    use EntityKind::*;

    if fc.kind == "algebraic" {
        let text = fc.expression.clone().ok_or_else(|| {
            ModelError::Parse("algebraic constraint without 'expression'".into())
        })?;
        let expr = parse_algebraic(&text, parameters)?;
        return Ok(Constraint::Algebraic { text, expr });
    }

    let refs = fc
        .between
        .iter()
        .map(|id| resolver.find(id))
        .collect::<Result<Vec<_>, _>>()?;
    let kinds: Vec<EntityKind> = refs.iter().map(|&r| entities[r].kind).collect();

    let dimensional = |kind: DimensionalKind, ents: Vec<usize>| -> Result<Constraint, ModelError> {
        let name = fc.parameter.as_ref().ok_or_else(|| {
            ModelError::Parse(format!("'{}' constraint without 'parameter'", fc.kind))
        })?;
        let parameter = parameters
            .iter()
            .position(|p| &p.name == name)
            .ok_or_else(|| ModelError::UnknownParameter(name.clone()))?;
        Ok(Constraint::Dimensional {
            kind,
            entities: ents,
            parameter,
        })
    };
    let structural = |kind: StructuralKind, ents: Vec<usize>| Ok(Constraint::Structural {
        kind,
        entities: ents,
    });
    let swap = |r: &[usize]| vec![r[1], r[0]];

    match (fc.kind.as_str(), kinds.as_slice()) {
        ("distance", [Point, Point]) => dimensional(DimensionalKind::PointPointDistance, refs),
        ("distance", [Point, Line]) => dimensional(DimensionalKind::PointLineDistance, refs),
        ("distance", [Line, Point]) => dimensional(DimensionalKind::PointLineDistance, swap(&refs)),
        ("distance", [Line, Line]) => dimensional(DimensionalKind::LineLineDistance, refs),
        ("distance", k) => Err(arity_error(fc, "two points, a point and a line, or two lines", k)),
        ("angle", [Line, Line]) => dimensional(DimensionalKind::Angle, refs),
        ("angle", k) => Err(arity_error(fc, "two lines", k)),
        ("radius", [Circle]) => dimensional(DimensionalKind::Radius, refs),
        ("diameter", [Circle]) => dimensional(DimensionalKind::Diameter, refs),
        ("radius" | "diameter", k) => Err(arity_error(fc, "one circle", k)),
        ("coincident", [Point, Point]) => structural(StructuralKind::PointCoincident, refs),
        ("coincident", [Line, Line]) => structural(StructuralKind::LineCoincident, refs),
        ("coincident", k) => Err(arity_error(fc, "two points or two lines", k)),
        ("on", [Point, Line]) => structural(StructuralKind::PointOnLine, refs),
        ("on", [Line, Point]) => structural(StructuralKind::PointOnLine, swap(&refs)),
        ("on", [Point, Circle]) => structural(StructuralKind::PointOnCircle, refs),
        ("on", [Circle, Point]) => structural(StructuralKind::PointOnCircle, swap(&refs)),
        ("on", [Point, Ellipse]) => structural(StructuralKind::PointOnEllipse, refs),
        ("on", [Ellipse, Point]) => structural(StructuralKind::PointOnEllipse, swap(&refs)),
        ("on", k) => Err(arity_error(fc, "a point and a line, circle or ellipse", k)),
        ("parallel", [Line, Line]) => structural(StructuralKind::Parallel, refs),
        ("perpendicular", [Line, Line]) => structural(StructuralKind::Perpendicular, refs),
        ("parallel" | "perpendicular", k) => Err(arity_error(fc, "two lines", k)),
        ("tangent", [Line, Circle]) => structural(StructuralKind::LineCircleTangent, refs),
        ("tangent", [Circle, Line]) => structural(StructuralKind::LineCircleTangent, swap(&refs)),
        ("tangent", k) => Err(arity_error(fc, "a line and a circle", k)),
        ("tangent_internal", [Circle, Circle]) => {
            structural(StructuralKind::CircleTangentInternal, refs)
        }
        ("tangent_external", [Circle, Circle]) => {
            structural(StructuralKind::CircleTangentExternal, refs)
        }
        ("tangent_internal" | "tangent_external", k) => Err(arity_error(fc, "two circles", k)),
        ("concentric", [a, b]) if *a != Point && *a != Line && *b != Point && *b != Line => {
            structural(StructuralKind::Concentric, refs)
        }
        ("concentric", k) => Err(arity_error(fc, "two circles or ellipses", k)),
        ("symmetric", [Point, Point, Line]) => structural(StructuralKind::Symmetric, refs),
        ("symmetric", k) => Err(arity_error(fc, "two points and a line", k)),
        (other, _) => Err(ModelError::Parse(format!("unknown constraint type '{other}'"))),
    }
}
