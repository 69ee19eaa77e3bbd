//! Command-line verbs.
//!
//! Without `--session` every invocation is self-contained: the session is
//! selected from the system file and the `name=value` assignments are replayed
//! in order, each checked against its freshly computed range. With
//! `--session PATH` the state is read from and written back to `PATH`.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use prange_core::model::parse_value;
use prange_core::session::{solve_system, RangeSet, SessionError, Solution};
use prange_core::{Config, ConstraintSystem, EditingSession, ParameterRange};
use serde_json::{json, Value};

use crate::server::{self, Service};
use crate::{Class, Failure, Summary};

#[derive(Parser, Debug)]
#[command(name = "prange", version, about = "Allowable parameter ranges for 2D constraint systems")]
pub struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Validate a system file and summarize it.
    Load(Common),
    /// List parameters with their kinds, values and session roles.
    Params(Common),
    /// Start a session with the `--select`ed variable parameters.
    Select(Common),
    /// Compute the ranges of every unassigned variable.
    Ranges(Common),
    /// Accept `name=value` assignments, each inside its range.
    Assign(Common),
    /// Revert the latest assignment.
    Undo(Common),
    /// Solve the system once every variable is assigned.
    Finalize(Common),
    /// Solve the system at the file's values, with `name=value` overrides.
    Solve(Common),
    /// Session state and ranges with endpoint candidates and samples.
    Report(Common),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// System file, then `name=value` assignments in editing order.
    inputs: Vec<String>,
    /// Variable parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    select: Vec<String>,
    /// Session file to resume from and save to.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// System file.
    system: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    select: Vec<String>,
    /// Session file to resume from and save to after every change.
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Debug, Clone)]
struct Tuning {
    #[arg(long, env = "PRANGE_SEED")]
    seed: Option<u64>,
    /// Swarm size.
    #[arg(long)]
    particles: Option<usize>,
    /// Swarm iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Singularity threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Feasibility threshold on the sum of squared residuals.
    #[arg(long)]
    efeas: Option<f64>,
    /// Probe unbounded intervals at several distances.
    #[arg(long)]
    paranoid: bool,
    /// Coordinate box half-width in multiples of the largest fixed length.
    #[arg(long)]
    box_factor: Option<f64>,
}

impl Tuning {
    fn apply(&self, cfg: &mut Config) {
        if let Some(n) = self.particles {
            cfg.swarm.particle_count = n;
        }
        if let Some(n) = self.iters {
            cfg.swarm.max_iterations = n;
        }
        if let Some(d) = self.delta {
            cfg.endpoints.delta = d;
        }
        if let Some(e) = self.efeas {
            cfg.feasibility.efeas = e;
        }
        if self.paranoid {
            cfg.validation.paranoid = true;
        }
        if let Some(b) = self.box_factor {
            cfg.swarm.box_factor = b;
        }
    }

    fn config_for(&self, sys: &ConstraintSystem) -> Config {
        let mut cfg = sys.solver.clone().unwrap_or_default();
        self.apply(&mut cfg);
        cfg
    }
}

fn usage(detail: impl Into<String>) -> Failure {
    Failure::new(Class::Usage, "usage", detail)
}

/// Splits positional inputs into the system file and `name=value` pairs.
fn split_inputs(inputs: &[String]) -> Result<(Option<PathBuf>, Vec<(String, String)>), Failure> {
    let mut file = None;
    let mut pairs = Vec::new();
    for item in inputs {
        if let Some((name, value)) = item.split_once('=') {
            if name.trim().is_empty() || value.trim().is_empty() {
                return Err(usage(format!("malformed assignment '{item}'")));
            }
            pairs.push((name.trim().to_string(), value.trim().to_string()));
        } else if file.is_none() && pairs.is_empty() {
            file = Some(PathBuf::from(item));
        } else {
            return Err(usage(format!("unexpected argument '{item}'")));
        }
    }
    Ok((file, pairs))
}

fn load_system(path: &Path) -> Result<ConstraintSystem, Failure> {
    Ok(ConstraintSystem::load_file(path)?)
}

fn value_of(sys: &ConstraintSystem, name: &str, raw: &str) -> Result<f64, Failure> {
    let kind = sys
        .parameter(name)
        .ok_or_else(|| SessionError::UnknownParameter(name.to_string()))?
        .kind;
    let v = match raw.parse::<f64>() {
        Ok(v) => Value::from(v),
        Err(_) => Value::String(raw.to_string()),
    };
    parse_value(&v, kind).map_err(|e| usage(format!("{name}: {e}")))
}

/// Opens the session of `c`: resumed from `--session` when that file exists,
/// otherwise selected from the system file. Assignments are replayed.
fn open_session(c: &Common, fresh: bool) -> Result<EditingSession, Failure> {
    let (file, pairs) = split_inputs(&c.inputs)?;
    let resume = c.session.as_ref().filter(|p| !fresh && p.exists());
    let mut session = match (resume, file) {
        (Some(_), Some(_)) => {
            return Err(usage(
                "give either a system file or an existing --session, not both",
            ))
        }
        (Some(path), None) => {
            if !c.select.is_empty() {
                return Err(usage("--select cannot change a resumed session"));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::new(Class::Model, "io", format!("{}: {e}", path.display())))?;
            let mut s = EditingSession::from_json(&text)?;
            c.tuning.apply(&mut s.config);
            if let Some(seed) = c.tuning.seed {
                s.seed = seed;
            }
            s
        }
        (None, Some(path)) => {
            let sys = load_system(&path)?;
            if c.select.is_empty() {
                return Err(usage("--select is required to start a session"));
            }
            let cfg = c.tuning.config_for(&sys);
            EditingSession::select(sys, &c.select, cfg, c.tuning.seed.unwrap_or(0))?
        }
        (None, None) => return Err(usage("a system file or an existing --session is required")),
    };
    for (name, raw) in &pairs {
        let value = value_of(&session.system, name, raw)?;
        assign_checked(&mut session, name, value)?;
    }
    Ok(session)
}

/// Computes the range of `name` if needed, then assigns.
fn assign_checked(s: &mut EditingSession, name: &str, value: f64) -> Result<(), Failure> {
    if !(s.ranges_fresh && s.last_ranges.contains_key(name)) {
        if s.assigned.contains_key(name) {
            return Err(SessionError::AlreadyAssigned(name.to_string()).into());
        }
        let rs = s.ranges_for(&[name.to_string()])?;
        if let Some(e) = rs.errors.get(name) {
            return Err(Failure::new(
                Class::Computation,
                "range_failure",
                format!("range of {name}: {e}"),
            ));
        }
    }
    s.assign(name, value)?;
    log::info!("{name} = {value} accepted");
    Ok(())
}

fn save(c: &Common, s: &EditingSession) -> Result<(), Failure> {
    if let Some(path) = &c.session {
        std::fs::write(path, s.to_json()).map_err(|e| {
            Failure::new(Class::Computation, "io", format!("{}: {e}", path.display()))
        })?;
    }
    Ok(())
}

fn system_only(c: &Common) -> Result<(ConstraintSystem, Vec<(String, String)>), Failure> {
    if c.session.is_some() {
        return Err(usage("this verb reads a system file, not a session"));
    }
    let (file, pairs) = split_inputs(&c.inputs)?;
    let path = file.ok_or_else(|| usage("a system file is required"))?;
    Ok((load_system(&path)?, pairs))
}

type Out<'a> = &'a mut dyn Write;

fn emit(out: Out, text: &str) {
    let _ = writeln!(out, "{text}");
}

fn emit_json(out: Out, value: &impl serde::Serialize) {
    emit(out, &serde_json::to_string_pretty(value).expect("serializes"));
}

fn print_summary(out: Out, s: &EditingSession) {
    emit(out, &format!("variables: {}", s.variables.join(", ")));
    for step in &s.history {
        emit(out, &format!("  {} = {}", step.parameter, step.value));
    }
    let open = s.unassigned();
    if open.is_empty() {
        emit(out, "all variables assigned");
    } else {
        emit(out, &format!("unassigned: {}", open.join(", ")));
    }
}

fn print_ranges(out: Out, rs: &RangeSet) {
    for (name, r) in &rs.ranges {
        emit(out, &format!("{name}: {r}"));
    }
    for (name, e) in &rs.errors {
        emit(out, &format!("{name}: error: {e}"));
    }
}

fn print_solution(out: Out, s: &Solution) {
    for e in &s.entities {
        let coords: Vec<String> = e.values.iter().map(|(k, v)| format!("{k}={v:.9}")).collect();
        emit(out, &format!("{} {} {}", e.id, e.kind, coords.join(" ")));
    }
    for (name, v) in &s.measured {
        emit(out, &format!("{name} = {v:.9}"));
    }
    emit(out, &format!("residual {:.3e}", s.residual));
}

/// Ranges in report order; failures are returned after the ranges print.
fn range_failures(rs: &RangeSet) -> Result<(), Failure> {
    if rs.errors.is_empty() {
        return Ok(());
    }
    let names: Vec<&str> = rs.errors.keys().map(String::as_str).collect();
    Err(Failure::new(
        Class::Computation,
        "range_failure",
        format!("range computation failed for {}", names.join(", ")),
    ))
}

fn sorted_ranges(rs: &RangeSet) -> Vec<&ParameterRange> {
    rs.ranges.values().collect()
}

fn load(c: &Common, out: Out) -> Result<(), Failure> {
    let (sys, pairs) = system_only(c)?;
    if !pairs.is_empty() {
        return Err(usage("load takes no assignments"));
    }
    if c.json {
        emit_json(out, &sys.to_file());
    } else {
        emit(
            out,
            &format!(
                "{} entities ({} coordinates), {} constraints, {} parameters",
                sys.entities.len(),
                sys.n_slots(),
                sys.constraints.len(),
                sys.parameters.len()
            ),
        );
    }
    Ok(())
}

fn params(c: &Common, out: Out) -> Result<(), Failure> {
    let (sys, session) = if c.session.as_ref().is_some_and(|p| p.exists()) {
        let s = open_session(c, false)?;
        (s.system.clone(), Some(s))
    } else {
        let (sys, pairs) = system_only(c)?;
        if !pairs.is_empty() {
            return Err(usage("params takes no assignments"));
        }
        (sys, None)
    };
    let rows: Vec<Value> = sys
        .parameters
        .iter()
        .map(|p| {
            let (role, value) = match &session {
                Some(s) if s.assigned.contains_key(&p.name) => ("assigned", Some(s.assigned[&p.name])),
                Some(s) if s.variables.contains(&p.name) => ("variable", p.value),
                Some(_) => ("fixed", p.value),
                None => ("declared", p.value),
            };
            json!({ "name": p.name, "kind": p.kind.name(), "value": value, "role": role })
        })
        .collect();
    if c.json {
        emit_json(out, &rows);
    } else {
        for (p, row) in sys.parameters.iter().zip(&rows) {
            let value = match row["value"].as_f64() {
                Some(v) if p.kind.is_angle() => format!("{v} rad ({:.6} deg)", v.to_degrees()),
                Some(v) => v.to_string(),
                None => "-".into(),
            };
            emit(
                out,
                &format!("{} {} {} {}", p.name, p.kind.name(), value, row["role"].as_str().unwrap_or("")),
            );
        }
    }
    Ok(())
}

fn select(c: &Common, out: Out) -> Result<(), Failure> {
    let s = open_session(c, true)?;
    save(c, &s)?;
    if c.json {
        emit_json(out, &Summary::of(&s));
    } else {
        print_summary(out, &s);
    }
    Ok(())
}

fn ranges(c: &Common, out: Out) -> Result<(), Failure> {
    let mut s = open_session(c, false)?;
    let rs = s.ranges()?;
    save(c, &s)?;
    if c.json {
        emit_json(out, &sorted_ranges(&rs));
    } else {
        print_ranges(out, &rs);
    }
    range_failures(&rs)
}

fn assign(c: &Common, out: Out) -> Result<(), Failure> {
    let (_, pairs) = split_inputs(&c.inputs)?;
    if pairs.is_empty() {
        return Err(usage("assign needs at least one name=value"));
    }
    let s = open_session(c, false)?;
    save(c, &s)?;
    if c.json {
        emit_json(out, &Summary::of(&s));
    } else {
        print_summary(out, &s);
    }
    Ok(())
}

fn undo(c: &Common, out: Out) -> Result<(), Failure> {
    let mut s = open_session(c, false)?;
    let step = s.undo()?;
    save(c, &s)?;
    if c.json {
        emit_json(out, &json!({ "undone": step, "session": Summary::of(&s) }));
    } else {
        emit(out, &format!("undid {} = {}", step.parameter, step.value));
        print_summary(out, &s);
    }
    Ok(())
}

fn finalize(c: &Common, out: Out) -> Result<(), Failure> {
    let mut s = open_session(c, false)?;
    let solution = s.finalize()?;
    save(c, &s)?;
    if c.json {
        emit_json(out, &solution);
    } else {
        print_solution(out, &solution);
    }
    Ok(())
}

fn solve(c: &Common, out: Out) -> Result<(), Failure> {
    let (mut sys, pairs) = system_only(c)?;
    for (name, raw) in &pairs {
        let v = value_of(&sys, name, raw)?;
        sys = sys.with_value(name, v)?;
    }
    let cfg = c.tuning.config_for(&sys);
    let values = sys.current_values();
    if let Some(p) = sys.parameters.iter().find(|p| p.value.is_none()) {
        return Err(SessionError::MissingValue(p.name.clone()).into());
    }
    let solution = solve_system(&sys, &values, &cfg, None)?;
    if c.json {
        emit_json(out, &solution);
    } else {
        print_solution(out, &solution);
    }
    Ok(())
}

fn report(c: &Common, out: Out) -> Result<(), Failure> {
    let mut s = open_session(c, false)?;
    let rs = if s.unassigned().is_empty() {
        RangeSet::default()
    } else {
        s.ranges()?
    };
    save(c, &s)?;
    if c.json {
        emit_json(
            out,
            &json!({
                "session": Summary::of(&s),
                "ranges": sorted_ranges(&rs),
                "errors": rs.errors,
                "solution": s.solution,
            }),
        );
        return range_failures(&rs);
    }
    emit(out, &format!("seed {}", s.seed));
    print_summary(out, &s);
    for (name, r) in &rs.ranges {
        emit(out, &format!("{name}: {r}"));
        let p = &r.provenance;
        emit(
            out,
            &format!(
                "  {} roots, {} evaluations{}{}",
                p.roots,
                p.evaluations,
                if p.continuum { ", continuum of roots" } else { "" },
                if p.gauge_dropped { ", rotation gauge dropped" } else { "" },
            ),
        );
        for cand in &p.candidates {
            emit(
                out,
                &format!(
                    "  candidate {} {:?} {:?}{}{}",
                    cand.value,
                    cand.closedness,
                    cand.origin,
                    cand.line.as_ref().map(|l| format!(" line {l}")).unwrap_or_default(),
                    if cand.at_box_boundary { " at search-box boundary" } else { "" },
                ),
            );
        }
        for sample in &p.samples {
            emit(
                out,
                &format!(
                    "  sample {} {:?} {} (residual {:.2e})",
                    sample.value,
                    sample.role,
                    if sample.solvable { "solvable" } else { "unsolvable" },
                    sample.residual
                ),
            );
        }
    }
    for (name, e) in &rs.errors {
        emit(out, &format!("{name}: error: {e}"));
    }
    range_failures(&rs)
}

fn serve(a: &ServeArgs) -> Result<(), Failure> {
    let resume = a.session.as_ref().filter(|p| p.exists());
    let service = match (resume, &a.system) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::new(Class::Model, "io", format!("{}: {e}", path.display())))?;
            let mut s = EditingSession::from_json(&text)?;
            a.tuning.apply(&mut s.config);
            if let Some(seed) = a.tuning.seed {
                s.seed = seed;
            }
            Service::new(s.system.clone(), s.config.clone(), s.seed).with_session(s)
        }
        (None, Some(path)) => {
            let sys = load_system(path)?;
            let cfg = a.tuning.config_for(&sys);
            let seed = a.tuning.seed.unwrap_or(0);
            let service = Service::new(sys.clone(), cfg.clone(), seed);
            if a.select.is_empty() {
                service
            } else {
                service.with_session(EditingSession::select(sys, &a.select, cfg, seed)?)
            }
        }
        (None, None) => return Err(usage("a system file or an existing --session is required")),
    };
    let service = match &a.session {
        Some(path) => service.saving_to(path.clone()),
        None => service,
    };
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| usage(format!("bad address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Failure::new(Class::Computation, "io", e.to_string()))?;
    runtime
        .block_on(server::serve(service.shared(), addr))
        .map_err(|e| Failure::new(Class::Computation, "io", e.to_string()))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: Out, err: Out) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{e}");
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => Class::Usage.exit_code(),
            };
        }
    };
    let (result, json_errors) = match &cli.verb {
        Verb::Load(c) => (load(c, out), c.json),
        Verb::Params(c) => (params(c, out), c.json),
        Verb::Select(c) => (select(c, out), c.json),
        Verb::Ranges(c) => (ranges(c, out), c.json),
        Verb::Assign(c) => (assign(c, out), c.json),
        Verb::Undo(c) => (undo(c, out), c.json),
        Verb::Finalize(c) => (finalize(c, out), c.json),
        Verb::Solve(c) => (solve(c, out), c.json),
        Verb::Report(c) => (report(c, out), c.json),
        Verb::Serve(a) => (serve(a), false),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            if json_errors {
                let mut body = json!({ "error": f.code, "detail": f.detail });
                if let Some(Value::Object(extra)) = &f.data {
                    body.as_object_mut().expect("object").extend(extra.clone());
                }
                let _ = writeln!(err, "{body}");
            } else {
                let _ = writeln!(err, "error: {}", f.detail);
            }
            f.class.exit_code()
        }
    }
}
