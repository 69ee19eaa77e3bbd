//! Command-line front end and HTTP service for `prange-core` editing sessions.

pub mod cli;
pub mod server;

use prange_core::session::SessionError;
use serde::Serialize;

/// How a failure is reported: CLI exit code and HTTP status follow from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// Bad arguments or an operation the session state does not allow.
    Usage,
    /// The system file or a parameter reference is invalid.
    Model,
    /// A solver or range computation failed.
    Computation,
    /// An assignment was refused.
    Rejected,
}

impl Class {
    pub fn exit_code(self) -> i32 {
        match self {
            Class::Usage => 1,
            Class::Model => 2,
            Class::Computation => 3,
            Class::Rejected => 4,
        }
    }
}

/// A classified failure with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub class: Class,
    pub code: &'static str,
    pub detail: String,
    /// Extra structured context, such as the violated range.
    pub data: Option<serde_json::Value>,
}

impl Failure {
    pub fn new(class: Class, code: &'static str, detail: impl Into<String>) -> Self {
        Failure {
            class,
            code,
            detail: detail.into(),
            data: None,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.detail)
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        use SessionError::*;
        let (class, code) = match &e {
            NoVariables => (Class::Usage, "no_variables"),
            NotVariable(_) => (Class::Usage, "not_variable"),
            AlreadyAssigned(_) => (Class::Usage, "already_assigned"),
            StaleRanges(_) => (Class::Usage, "stale_ranges"),
            Unassigned(_) => (Class::Usage, "unassigned"),
            NothingUnassigned => (Class::Usage, "nothing_unassigned"),
            EmptyHistory => (Class::Usage, "empty_history"),
            NoParameters => (Class::Model, "no_parameters"),
            UnknownParameter(_) => (Class::Model, "unknown_parameter"),
            MissingValue(_) => (Class::Model, "missing_value"),
            Model(_) => (Class::Model, "model"),
            Separation(_) => (Class::Model, "separation"),
            Endpoint(_) => (Class::Computation, "endpoint"),
            SolveFailure { .. } => (Class::Computation, "solve_failure"),
            OutOfRange { .. } => (Class::Rejected, "out_of_range"),
            Infeasible { .. } => (Class::Rejected, "infeasible"),
        };
        let data = match &e {
            OutOfRange {
                parameter,
                value,
                range,
            } => Some(serde_json::json!({
                "parameter": parameter,
                "value": value,
                "range": range,
            })),
            Infeasible {
                parameter,
                value,
                residual,
            } => Some(serde_json::json!({
                "parameter": parameter,
                "value": value,
                "residual": residual,
            })),
            SolveFailure { residual } => Some(serde_json::json!({ "residual": residual })),
            Unassigned(names) => Some(serde_json::json!({ "unassigned": names })),
            _ => None,
        };
        Failure {
            class,
            code,
            detail: e.to_string(),
            data,
        }
    }
}

impl From<prange_core::model::ModelError> for Failure {
    fn from(e: prange_core::model::ModelError) -> Self {
        Failure::from(SessionError::Model(e))
    }
}

/// Session state without the system and cached ranges.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub variables: Vec<String>,
    pub unassigned: Vec<String>,
    pub assigned: std::collections::BTreeMap<String, f64>,
    pub fixed: std::collections::BTreeMap<String, f64>,
    pub history: Vec<prange_core::session::Step>,
    pub ranges_fresh: bool,
    pub seed: u64,
}

impl Summary {
    pub fn of(s: &prange_core::EditingSession) -> Self {
        Summary {
            variables: s.variables.clone(),
            unassigned: s.unassigned(),
            assigned: s.assigned.clone(),
            fixed: s.fixed.clone(),
            history: s.history.clone(),
            ranges_fresh: s.ranges_fresh,
            seed: s.seed,
        }
    }
}
