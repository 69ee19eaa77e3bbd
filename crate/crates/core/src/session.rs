//! Sequential multi-parameter editing.
//!
//! The user selects variable parameters; every other parameter is fixed at
//! its current value. Ranges are computed for the unassigned variables, one
//! variable is assigned inside its range, and the loop repeats until all are
//! assigned and the system is solved.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::endpoints::{self, EndpointError};
use crate::model::{ConstraintSystem, ModelError};
use crate::ranges::{self, check_feasible, ParameterRange};
use crate::separation::{separate, SeparatedFunction, SeparationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("no variable parameters selected")]
    NoVariables,
    #[error("the system declares no parameters")]
    NoParameters,
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{0}' has no current value")]
    MissingValue(String),
    #[error("'{0}' is not a variable parameter of this session")]
    NotVariable(String),
    #[error("'{0}' is already assigned")]
    AlreadyAssigned(String),
    #[error("ranges of '{0}' are stale or were never computed")]
    StaleRanges(String),
    #[error("{parameter} = {value} is outside its range {range}")]
    OutOfRange {
        parameter: String,
        value: f64,
        range: ParameterRange,
    },
    #[error("{parameter} = {value} leaves the system unsolvable (residual {residual:e})")]
    Infeasible {
        parameter: String,
        value: f64,
        residual: f64,
    },
    #[error("unassigned variables remain: {}", .0.join(", "))]
    Unassigned(Vec<String>),
    #[error("every variable is assigned")]
    NothingUnassigned,
    #[error("system could not be solved (best residual {residual:e})")]
    SolveFailure { residual: f64 },
    #[error("nothing to undo")]
    EmptyHistory,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Separation(#[from] SeparationError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub parameter: String,
    pub value: f64,
}

/// A solved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Solution {
    /// Global slot values.
    pub coordinates: Vec<f64>,
    pub entities: Vec<EntityCoordinates>,
    /// Every parameter measured on the configuration.
    pub measured: BTreeMap<String, f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCoordinates {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub values: BTreeMap<String, f64>,
}

/// Ranges of the unassigned variables, with per-variable failures.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RangeSet {
    pub ranges: BTreeMap<String, ParameterRange>,
    pub errors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EditingSession {
    #[serde(with = "as_file")]
    pub system: ConstraintSystem,
    /// In selection order.
    pub variables: Vec<String>,
    pub assigned: BTreeMap<String, f64>,
    pub fixed: BTreeMap<String, f64>,
    pub history: Vec<Step>,
    pub last_ranges: BTreeMap<String, ParameterRange>,
    /// `last_ranges` describes the current assignment state.
    pub ranges_fresh: bool,
    pub seed: u64,
    pub config: Config,
    /// Witness from the latest assignment check, in global slots.
    #[serde(default)]
    pub hint: Option<Vec<f64>>,
    #[serde(default)]
    pub solution: Option<Solution>,
}

mod as_file {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::model::{ConstraintSystem, FileSystem};

    pub fn serialize<S: Serializer>(sys: &ConstraintSystem, s: S) -> Result<S::Ok, S::Error> {
        sys.to_file().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ConstraintSystem, D::Error> {
        FileSystem::deserialize(d)?
            .build()
            .map_err(serde::de::Error::custom)
    }
}

/// Stable per-name seed offset.
fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Range of `target` with `fixed` held and `unassigned` free.
pub fn compute_range(
    sys: &ConstraintSystem,
    target: &str,
    fixed: &BTreeMap<String, f64>,
    unassigned: &BTreeSet<String>,
    cfg: &Config,
    seed: u64,
) -> Result<ParameterRange, SessionError> {
    let sf = separate(sys, target, fixed, unassigned, cfg)?;
    Ok(range_of(&sf, cfg, seed)?)
}

/// Endpoint candidates and validation of a separated target.
pub fn range_of(
    sf: &SeparatedFunction,
    cfg: &Config,
    seed: u64,
) -> Result<ParameterRange, EndpointError> {
    let run_seed = name_seed(seed, &sf.target);
    let (candidates, closed) = endpoints::candidates(sf, cfg, run_seed)?;
    let mut range = ranges::validate(&candidates, sf, cfg, seed);
    range.provenance.continuum = closed.continuum;
    range.provenance.roots = closed.roots;
    range.provenance.evaluations = closed.evaluations;
    Ok(range)
}

/// Solves the whole system with every parameter at `values`.
pub fn solve_system(
    sys: &ConstraintSystem,
    values: &BTreeMap<String, f64>,
    cfg: &Config,
    hint: Option<&[f64]>,
) -> Result<Solution, SessionError> {
    let names = sys.parameter_names();
    let solved = |x: Vec<f64>, residual: f64| {
        let entities = sys
            .entities
            .iter()
            .map(|e| EntityCoordinates {
                id: e.id.clone(),
                kind: e.kind.name().to_string(),
                values: e
                    .kind
                    .slot_names()
                    .iter()
                    .enumerate()
                    .map(|(k, n)| (n.to_string(), x[e.offset + k]))
                    .collect(),
            })
            .collect();
        Solution {
            measured: sys.measure_all(&x),
            coordinates: x,
            entities,
            residual,
        }
    };
    let Some(target) = names.last() else {
        return Err(SessionError::NoParameters);
    };
    let mut fixed = values.clone();
    let p = fixed
        .remove(target)
        .ok_or_else(|| SessionError::MissingValue(target.clone()))?;
    let sf = separate(sys, target, &fixed, &BTreeSet::new(), cfg)?;
    let local_hint = hint.map(|h| {
        sf.layout.iter().map(|&slot| h[slot]).collect::<Vec<f64>>()
    });
    let verdict = check_feasible(&sf, p, cfg, local_hint.as_deref());
    match verdict.witness {
        Some(w) if verdict.solvable => Ok(solved(sf.expand(&w), verdict.best_residual)),
        _ => Err(SessionError::SolveFailure {
            residual: verdict.best_residual,
        }),
    }
}

impl EditingSession {
    /// Starts a session with `names` variable and every other parameter fixed.
    pub fn select(
        system: ConstraintSystem,
        names: &[String],
        config: Config,
        seed: u64,
    ) -> Result<Self, SessionError> {
        if names.is_empty() {
            return Err(SessionError::NoVariables);
        }
        let mut variables: Vec<String> = Vec::new();
        for n in names {
            let p = system
                .parameter(n)
                .ok_or_else(|| SessionError::UnknownParameter(n.clone()))?;
            if p.value.is_none() {
                return Err(SessionError::MissingValue(n.clone()));
            }
            if !variables.contains(n) {
                variables.push(n.clone());
            }
        }
        let mut fixed = BTreeMap::new();
        for p in &system.parameters {
            if variables.contains(&p.name) {
                continue;
            }
            let v = p
                .value
                .ok_or_else(|| SessionError::MissingValue(p.name.clone()))?;
            fixed.insert(p.name.clone(), v);
        }
        Ok(EditingSession {
            system,
            variables,
            assigned: BTreeMap::new(),
            fixed,
            history: Vec::new(),
            last_ranges: BTreeMap::new(),
            ranges_fresh: false,
            seed,
            config,
            hint: None,
            solution: None,
        })
    }

    pub fn unassigned(&self) -> Vec<String> {
        self.variables
            .iter()
            .filter(|v| !self.assigned.contains_key(*v))
            .cloned()
            .collect()
    }

    /// Fixed parameters together with the assignments so far.
    pub fn known_values(&self) -> BTreeMap<String, f64> {
        let mut out = self.fixed.clone();
        out.extend(self.assigned.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }

    fn range_for(&self, name: &str) -> Result<ParameterRange, SessionError> {
        let unassigned: BTreeSet<String> = self
            .unassigned()
            .into_iter()
            .filter(|v| v != name)
            .collect();
        compute_range(
            &self.system,
            name,
            &self.known_values(),
            &unassigned,
            &self.config,
            self.seed,
        )
    }

    /// Computes the ranges of every unassigned variable.
    pub fn ranges(&mut self) -> Result<RangeSet, SessionError> {
        let names = self.unassigned();
        self.ranges_for(&names)
    }

    /// Computes the ranges of the named unassigned variables only.
    pub fn ranges_for(&mut self, names: &[String]) -> Result<RangeSet, SessionError> {
        let unassigned = self.unassigned();
        if unassigned.is_empty() {
            return Err(SessionError::NothingUnassigned);
        }
        for n in names {
            if !self.variables.contains(n) {
                return Err(SessionError::NotVariable(n.clone()));
            }
            if self.assigned.contains_key(n) {
                return Err(SessionError::AlreadyAssigned(n.clone()));
            }
        }
        let results: Vec<(String, Result<ParameterRange, SessionError>)> = names
            .par_iter()
            .map(|n| (n.clone(), self.range_for(n)))
            .collect();
        if !self.ranges_fresh {
            self.last_ranges.clear();
        }
        let mut out = RangeSet::default();
        for (name, result) in results {
            match result {
                Ok(r) => {
                    self.last_ranges.insert(name.clone(), r.clone());
                    out.ranges.insert(name, r);
                }
                Err(e) => {
                    log::warn!("range of {name} failed: {e}");
                    self.last_ranges.remove(&name);
                    out.errors.insert(name, e.to_string());
                }
            }
        }
        self.ranges_fresh = true;
        Ok(out)
    }

    /// Accepts `value` for `name` if it lies in the presented range and the
    /// system stays solvable.
    pub fn assign(&mut self, name: &str, value: f64) -> Result<(), SessionError> {
        if !self.variables.iter().any(|v| v == name) {
            return Err(SessionError::NotVariable(name.to_string()));
        }
        if self.assigned.contains_key(name) {
            return Err(SessionError::AlreadyAssigned(name.to_string()));
        }
        let range = match self.last_ranges.get(name) {
            Some(r) if self.ranges_fresh => r,
            _ => return Err(SessionError::StaleRanges(name.to_string())),
        };
        if !range.contains(value) {
            return Err(SessionError::OutOfRange {
                parameter: name.to_string(),
                value,
                range: range.clone(),
            });
        }
        let unassigned: BTreeSet<String> = self
            .unassigned()
            .into_iter()
            .filter(|v| v != name)
            .collect();
        let sf = separate(
            &self.system,
            name,
            &self.known_values(),
            &unassigned,
            &self.config,
        )?;
        let verdict = check_feasible(&sf, value, &self.config, None);
        if !verdict.solvable {
            return Err(SessionError::Infeasible {
                parameter: name.to_string(),
                value,
                residual: verdict.best_residual,
            });
        }
        self.hint = verdict.witness.map(|w| sf.expand(&w));
        self.assigned.insert(name.to_string(), value);
        self.history.push(Step {
            parameter: name.to_string(),
            value,
        });
        self.ranges_fresh = false;
        self.last_ranges.clear();
        self.solution = None;
        Ok(())
    }

    pub fn undo(&mut self) -> Result<Step, SessionError> {
        let step = self.history.pop().ok_or(SessionError::EmptyHistory)?;
        self.assigned.remove(&step.parameter);
        self.ranges_fresh = false;
        self.last_ranges.clear();
        self.hint = None;
        self.solution = None;
        Ok(step)
    }

    /// Solves the system with every parameter at its fixed or assigned value.
    pub fn finalize(&mut self) -> Result<Solution, SessionError> {
        let open = self.unassigned();
        if !open.is_empty() {
            return Err(SessionError::Unassigned(open));
        }
        let result = solve_system(
            &self.system,
            &self.known_values(),
            &self.config,
            self.hint.as_deref(),
        );
        match &result {
            Ok(s) => self.solution = Some(s.clone()),
            Err(e) => log::error!(
                "finalize failed after in-range assignments {:?}: {e}",
                self.history
            ),
        }
        result
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        serde_json::from_str(text)
            .map_err(|e| SessionError::Model(ModelError::Parse(e.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{
        "entities": [
            {"id": "P1", "type": "point"},
            {"id": "P2", "type": "point"},
            {"id": "P3", "type": "point"}
        ],
        "constraints": [
            {"type": "distance", "between": ["P1", "P2"], "parameter": "d1"},
            {"type": "distance", "between": ["P2", "P3"], "parameter": "d2"},
            {"type": "distance", "between": ["P1", "P3"], "parameter": "d3"}
        ],
        "parameters": [
            {"name": "d1", "kind": "distance", "value": 10},
            {"name": "d2", "kind": "distance", "value": 20},
            {"name": "d3", "kind": "distance", "value": 20}
        ]
    }"#;

    fn session() -> EditingSession {
        let sys = ConstraintSystem::load(TRIANGLE).unwrap();
        let mut cfg = Config::default();
        cfg.swarm.particle_count = 200;
        cfg.swarm.max_iterations = 100;
        EditingSession::select(sys, &["d2".into(), "d3".into()], cfg, 42).unwrap()
    }

    #[test]
    fn select_rules() {
        let s = session();
        assert_eq!(s.variables, vec!["d2", "d3"]);
        assert_eq!(s.fixed.len(), 1);
        let sys = ConstraintSystem::load(TRIANGLE).unwrap();
        assert_eq!(
            EditingSession::select(sys.clone(), &[], Config::default(), 0).unwrap_err(),
            SessionError::NoVariables
        );
        assert_eq!(
            EditingSession::select(sys, &["d9".into()], Config::default(), 0).unwrap_err(),
            SessionError::UnknownParameter("d9".into())
        );
    }

    #[test]
    fn assignment_needs_fresh_ranges() {
        let mut s = session();
        assert_eq!(
            s.assign("d2", 20.0).unwrap_err(),
            SessionError::StaleRanges("d2".into())
        );
        assert_eq!(s.undo().unwrap_err(), SessionError::EmptyHistory);
        assert!(matches!(
            s.finalize().unwrap_err(),
            SessionError::Unassigned(_)
        ));
    }

    #[test]
    fn assign_undo_roundtrip() {
        let mut s = session();
        s.ranges().unwrap();
        let before = s.to_json();
        s.assign("d2", 20.0).unwrap();
        assert_eq!(
            s.assign("d2", 21.0).unwrap_err(),
            SessionError::AlreadyAssigned("d2".into())
        );
        s.undo().unwrap();
        assert!(s.assigned.is_empty() && !s.ranges_fresh);
        s.ranges().unwrap();
        assert_eq!(s.to_json(), before);
        s.assign("d2", 15.0).unwrap();
    }

    #[test]
    fn session_json_roundtrip() {
        let mut s = session();
        s.ranges().unwrap();
        s.assign("d2", 20.0).unwrap();
        let back = EditingSession::from_json(&s.to_json()).unwrap();
        assert_eq!(back.to_json(), s.to_json());
    }
}
