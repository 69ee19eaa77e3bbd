mod common;

use common::{load, small_config};
use prange_core::config::Config;
use prange_core::session::{EditingSession, SessionError};

fn select(system: &str, names: &[&str], cfg: Config) -> EditingSession {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    EditingSession::select(load(system), &names, cfg, 42).unwrap()
}

fn triangle() -> EditingSession {
    select("triangle", &["d2", "d3"], small_config(500, 200))
}

#[test]
fn select_makes_the_rest_fixed() {
    let s = triangle();
    assert_eq!(s.variables, vec!["d2", "d3"]);
    assert_eq!(s.fixed.get("d1"), Some(&10.0));
    assert!(s.assigned.is_empty());
    assert_eq!(s.unassigned(), vec!["d2", "d3"]);
}

#[test]
fn select_errors() {
    let err = EditingSession::select(load("triangle"), &[], Config::default(), 0).unwrap_err();
    assert_eq!(err, SessionError::NoVariables);
    let err = EditingSession::select(load("triangle"), &["d9".into()], Config::default(), 0)
        .unwrap_err();
    assert_eq!(err, SessionError::UnknownParameter("d9".into()));
}

#[test]
fn hexagon_selects_all_nine_parameters() {
    let sys = load("hexagon");
    let all = sys.parameter_names();
    assert_eq!(all.len(), 9);
    let s = EditingSession::select(sys, &all, Config::default(), 0).unwrap();
    assert_eq!(s.variables.len(), 9);
    assert!(s.fixed.is_empty());
}

#[test]
fn triangle_editing_flow() {
    let mut s = triangle();
    let stage1 = s.ranges().unwrap();
    assert!(stage1.errors.is_empty());
    for name in ["d2", "d3"] {
        assert_eq!(stage1.ranges[name].to_string(), "[0, +inf)");
    }
    s.assign("d2", 20.0).unwrap();
    assert_eq!(
        s.assign("d2", 21.0).unwrap_err(),
        SessionError::AlreadyAssigned("d2".into())
    );
    assert_eq!(s.assign("d3", 20.0).unwrap_err(), SessionError::StaleRanges("d3".into()));

    let stage2 = s.ranges().unwrap();
    let d3 = &stage2.ranges["d3"];
    assert_eq!(d3.intervals.len(), 1);
    assert!((d3.intervals[0].lo - 10.0).abs() < 1e-3 && (d3.intervals[0].hi - 30.0).abs() < 1e-3);

    match s.assign("d3", 5.0).unwrap_err() {
        SessionError::OutOfRange { parameter, value, range } => {
            assert_eq!(parameter, "d3");
            assert_eq!(value, 5.0);
            assert_eq!(range.to_string(), d3.to_string());
        }
        other => panic!("{other:?}"),
    }
    // a rejected value leaves the session untouched
    assert_eq!(s.unassigned(), vec!["d3"]);

    assert!(matches!(s.finalize(), Err(SessionError::Unassigned(v)) if v == ["d3"]));
    s.assign("d3", 20.0).unwrap();
    let solution = s.finalize().unwrap();
    assert!(solution.residual < 1e-10);
    for (name, want) in [("d1", 10.0), ("d2", 20.0), ("d3", 20.0)] {
        assert!((solution.measured[name] - want).abs() < 1e-4, "{name}");
    }
    assert_eq!(solution.entities.len(), 3);
    assert_eq!(s.ranges().unwrap_err(), SessionError::NothingUnassigned);
}

#[test]
fn undo_restores_the_previous_assignment_state() {
    let mut s = triangle();
    assert_eq!(s.undo().unwrap_err(), SessionError::EmptyHistory);
    s.ranges().unwrap();
    let before = (s.assigned.clone(), s.fixed.clone(), s.variables.clone());
    s.assign("d2", 20.0).unwrap();
    let step = s.undo().unwrap();
    assert_eq!((step.parameter.as_str(), step.value), ("d2", 20.0));
    assert_eq!((s.assigned.clone(), s.fixed.clone(), s.variables.clone()), before);
    assert!(s.history.is_empty());
    assert!(!s.ranges_fresh);

    s.ranges().unwrap();
    s.assign("d2", 15.0).unwrap();
    assert_eq!(s.assigned["d2"], 15.0);
}

#[test]
fn session_survives_a_json_round_trip() {
    let mut s = triangle();
    s.ranges().unwrap();
    s.assign("d2", 20.0).unwrap();
    let text = s.to_json();
    let mut back = EditingSession::from_json(&text).unwrap();
    assert_eq!(back.assigned, s.assigned);
    assert_eq!(back.history, s.history);
    assert_eq!(back.seed, 42);
    let r = back.ranges().unwrap();
    assert!((r.ranges["d3"].intervals[0].hi - 30.0).abs() < 1e-3);
}

#[test]
fn assignments_never_change_after_acceptance() {
    let mut s = triangle();
    s.ranges().unwrap();
    s.assign("d2", 12.5).unwrap();
    s.ranges().unwrap();
    let _ = s.assign("d3", 1.0);
    s.ranges().unwrap();
    assert_eq!(s.assigned["d2"], 12.5);
    assert_eq!(s.history.len(), 1);
}

#[test]
fn case1_wider_quadrangle_is_completed() {
    let mut s = select("quadrangle", &["d1", "d3"], Config::default());
    let stage1 = s.ranges().unwrap();
    assert_eq!(stage1.ranges["d1"].to_string(), "[0, +inf)");
    s.assign("d1", 30.0).unwrap();
    let d3 = &s.ranges().unwrap().ranges["d3"];
    assert_eq!(d3.intervals.len(), 1);
    let diag = (30.0f64 * 30.0 + 100.0).sqrt();
    assert!((d3.intervals[0].lo - (diag - 10.0)).abs() < 5e-2);
    assert!((d3.intervals[0].hi - (diag + 10.0)).abs() < 5e-2);
    s.assign("d3", 25.0).unwrap();
    let solution = s.finalize().unwrap();
    assert!(solution.residual < 1e-10);
    assert!((solution.measured["d3"] - 25.0).abs() < 1e-4);
}

#[test]
fn range_failures_are_reported_per_variable() {
    let mut cfg = small_config(100, 50);
    cfg.endpoints.singular_depth = 3;
    let mut s = select("slider", &["d1", "d2"], cfg);
    let r = s.ranges().unwrap();
    // both targets see the through-line, so both fail
    assert_eq!(r.errors.len(), 2);
    assert!(r.ranges.is_empty());
    assert!(matches!(s.assign("d1", 1.0), Err(SessionError::StaleRanges(_))));
}
