//! HTTP service over a single editing session.
//!
//! Mutations are computed on a copy of the session and committed only if no
//! other mutation landed in between; `generation` counts commits. Range
//! computation runs on a blocking worker and is polled through
//! `/api/ranges/status`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prange_core::model::parse_value;
use prange_core::session::{RangeSet, Solution};
use prange_core::{Config, ConstraintSystem, EditingSession, ParameterRange};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{Class, Failure, Summary};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobStatus {
    Idle,
    #[serde(rename_all = "camelCase")]
    Computing {
        done: usize,
        total: usize,
        elapsed_seconds: f64,
    },
    Ready,
    Failed { detail: String },
}

pub struct Service {
    pub system: ConstraintSystem,
    pub config: Config,
    pub seed: u64,
    pub session: Option<EditingSession>,
    generation: u64,
    job: Job,
    ranges: Option<RangeSet>,
    save_to: Option<PathBuf>,
}

enum Job {
    Idle,
    Computing {
        done: usize,
        total: usize,
        started: Instant,
    },
    Ready,
    Failed(String),
}

pub type Shared = Arc<Mutex<Service>>;

impl Service {
    pub fn new(system: ConstraintSystem, config: Config, seed: u64) -> Self {
        Service {
            system,
            config,
            seed,
            session: None,
            generation: 0,
            job: Job::Idle,
            ranges: None,
            save_to: None,
        }
    }

    /// Resumes `session`; cached fresh ranges are served without recomputing.
    pub fn with_session(mut self, session: EditingSession) -> Self {
        if session.ranges_fresh && !session.last_ranges.is_empty() {
            self.ranges = Some(RangeSet {
                ranges: session.last_ranges.clone(),
                errors: BTreeMap::new(),
            });
            self.job = Job::Ready;
        }
        self.session = Some(session);
        self
    }

    /// Writes the session to `path` after every commit.
    pub fn saving_to(mut self, path: PathBuf) -> Self {
        self.save_to = Some(path);
        self
    }

    pub fn shared(self) -> Shared {
        Arc::new(Mutex::new(self))
    }

    fn status(&self) -> JobStatus {
        match &self.job {
            Job::Idle => JobStatus::Idle,
            Job::Computing {
                done,
                total,
                started,
            } => JobStatus::Computing {
                done: *done,
                total: *total,
                elapsed_seconds: started.elapsed().as_secs_f64(),
            },
            Job::Ready => JobStatus::Ready,
            Job::Failed(d) => JobStatus::Failed { detail: d.clone() },
        }
    }

    fn commit(&mut self, session: Option<EditingSession>) {
        self.generation += 1;
        self.session = session;
        self.ranges = None;
        self.job = Job::Idle;
        self.save();
    }

    fn save(&self) {
        if let (Some(path), Some(s)) = (&self.save_to, &self.session) {
            if let Err(e) = std::fs::write(path, s.to_json()) {
                log::error!("saving session to {}: {e}", path.display());
            }
        }
    }
}

fn lock(st: &Shared) -> MutexGuard<'_, Service> {
    st.lock().unwrap_or_else(|p| p.into_inner())
}

/// Starts the range job for the current generation unless one is running or
/// its result is cached.
fn start_ranges(st: &Shared) -> Result<(), Failure> {
    let mut guard = lock(st);
    let svc = &mut *guard;
    if matches!(svc.job, Job::Computing { .. } | Job::Ready) {
        return Ok(());
    }
    let mut session = svc.session.clone().ok_or_else(no_session)?;
    let names = session.unassigned();
    if names.is_empty() {
        return Err(prange_core::session::SessionError::NothingUnassigned.into());
    }
    let generation = svc.generation;
    svc.job = Job::Computing {
        done: 0,
        total: names.len(),
        started: Instant::now(),
    };
    let st = st.clone();
    tokio::task::spawn_blocking(move || {
        let mut merged = RangeSet::default();
        for name in &names {
            let result = session.ranges_for(std::slice::from_ref(name));
            let mut svc = lock(&st);
            if svc.generation != generation {
                return;
            }
            match result {
                Ok(rs) => {
                    merged.ranges.extend(rs.ranges);
                    merged.errors.extend(rs.errors);
                }
                Err(e) => {
                    svc.job = Job::Failed(e.to_string());
                    return;
                }
            }
            if let Job::Computing { done, .. } = &mut svc.job {
                *done += 1;
            }
        }
        let mut svc = lock(&st);
        if svc.generation == generation {
            svc.session = Some(session);
            svc.ranges = Some(merged);
            svc.job = Job::Ready;
            svc.save();
        }
    });
    Ok(())
}

fn no_session() -> Failure {
    Failure::new(Class::Usage, "no_session", "no variables selected yet")
}

/// A failure with its HTTP status.
pub struct ApiError(pub StatusCode, pub Failure);

impl From<Failure> for ApiError {
    fn from(f: Failure) -> Self {
        let status = match (f.class, f.code) {
            (Class::Rejected, _) => StatusCode::UNPROCESSABLE_ENTITY,
            (Class::Model, _) => StatusCode::BAD_REQUEST,
            (Class::Usage, "no_variables" | "not_variable" | "bad_request") => {
                StatusCode::BAD_REQUEST
            }
            (Class::Usage, _) => StatusCode::CONFLICT,
            (Class::Computation, _) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, f)
    }
}

impl From<prange_core::session::SessionError> for ApiError {
    fn from(e: prange_core::session::SessionError) -> Self {
        Failure::from(e).into()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Failure::new(Class::Usage, "bad_request", r.body_text()).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.1.code, "detail": self.1.detail });
        if let Some(Value::Object(extra)) = self.1.data {
            body.as_object_mut().expect("object").extend(extra);
        }
        (self.0, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: Serialize>(value: T) -> ApiResult {
    Ok(Json(value).into_response())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("worker panicked")
}

async fn system(State(st): State<Shared>) -> ApiResult {
    let svc = lock(&st);
    let mut body = serde_json::to_value(svc.system.to_file()).expect("system serializes");
    let obj = body.as_object_mut().expect("object");
    obj.insert("slots".into(), json!(svc.system.n_slots()));
    obj.insert("seed".into(), json!(svc.seed));
    obj.insert(
        "session".into(),
        serde_json::to_value(svc.session.as_ref().map(Summary::of)).expect("summary"),
    );
    ok(body)
}

#[derive(Deserialize)]
struct SelectBody {
    variables: Vec<String>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn select(State(st): State<Shared>, body: Result<Json<SelectBody>, JsonRejection>) -> ApiResult {
    let Json(body) = body?;
    let session = {
        let svc = lock(&st);
        EditingSession::select(
            svc.system.clone(),
            &body.variables,
            svc.config.clone(),
            body.seed.unwrap_or(svc.seed),
        )?
    };
    let summary = Summary::of(&session);
    lock(&st).commit(Some(session));
    start_ranges(&st)?;
    ok(summary)
}

#[derive(Deserialize)]
struct RangesQuery {
    #[serde(default)]
    wait: bool,
}

#[derive(Serialize)]
struct RangesBody {
    status: &'static str,
    generation: u64,
    /// Sorted by parameter name.
    ranges: Vec<ParameterRange>,
    errors: BTreeMap<String, String>,
}

async fn ranges(State(st): State<Shared>, Query(query): Query<RangesQuery>) -> ApiResult {
    let wait = query.wait;
    start_ranges(&st)?;
    loop {
        {
            let svc = lock(&st);
            match &svc.job {
                Job::Ready => {
                    let rs = svc.ranges.clone().unwrap_or_default();
                    return ok(RangesBody {
                        status: "ready",
                        generation: svc.generation,
                        ranges: rs.ranges.into_values().collect(),
                        errors: rs.errors,
                    });
                }
                Job::Failed(d) => {
                    return Err(Failure::new(Class::Computation, "range_failure", d.clone()).into())
                }
                Job::Computing { .. } if !wait => {
                    return Ok((StatusCode::ACCEPTED, Json(svc.status())).into_response());
                }
                _ => {}
            }
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
}

async fn ranges_status(State(st): State<Shared>) -> ApiResult {
    let svc = lock(&st);
    let mut body = serde_json::to_value(svc.status()).expect("status");
    body.as_object_mut()
        .expect("object")
        .insert("generation".into(), json!(svc.generation));
    ok(body)
}

#[derive(Deserialize)]
struct AssignBody {
    parameter: String,
    /// A number, or a string such as `"60 deg"`.
    value: Value,
}

/// Runs `op` on a copy of the session and commits it if nothing else did
/// in the meantime.
async fn mutate<T: Send + 'static>(
    st: &Shared,
    op: impl FnOnce(&mut EditingSession) -> Result<T, Failure> + Send + 'static,
) -> Result<(T, Summary), ApiError> {
    let (mut session, generation) = {
        let svc = lock(st);
        (svc.session.clone().ok_or_else(no_session)?, svc.generation)
    };
    let (out, session) = blocking(move || op(&mut session).map(|out| (out, session))).await?;
    let mut svc = lock(st);
    if svc.generation != generation {
        return Err(Failure::new(
            Class::Usage,
            "concurrent_edit",
            "the session changed while this request ran",
        )
        .into());
    }
    let summary = Summary::of(&session);
    svc.commit(Some(session));
    Ok((out, summary))
}

async fn assign(State(st): State<Shared>, body: Result<Json<AssignBody>, JsonRejection>) -> ApiResult {
    let Json(body) = body?;
    let name = body.parameter.clone();
    let ((), summary) = mutate(&st, move |s| {
        let kind = s
            .system
            .parameter(&body.parameter)
            .ok_or_else(|| {
                prange_core::session::SessionError::UnknownParameter(body.parameter.clone())
            })?
            .kind;
        let value = parse_value(&body.value, kind)
            .map_err(|e| Failure::new(Class::Usage, "bad_request", e))?;
        Ok(s.assign(&body.parameter, value)?)
    })
    .await?;
    if !summary.unassigned.is_empty() {
        start_ranges(&st)?;
    }
    ok(json!({ "accepted": name, "session": summary }))
}

async fn undo(State(st): State<Shared>) -> ApiResult {
    let (step, summary) = mutate(&st, |s| Ok(s.undo()?)).await?;
    start_ranges(&st)?;
    ok(json!({ "undone": step, "session": summary }))
}

async fn finalize(State(st): State<Shared>) -> ApiResult {
    let (solution, _) = mutate(&st, |s| Ok(s.finalize()?)).await?;
    ok(solution)
}

async fn solution(State(st): State<Shared>) -> ApiResult {
    let svc = lock(&st);
    let found: Option<Solution> = svc.session.as_ref().and_then(|s| s.solution.clone());
    match found {
        Some(s) => ok(s),
        None => Err(Failure::new(Class::Usage, "no_solution", "no finalized configuration yet").into()),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/system", get(system))
        .route("/api/select", post(select))
        .route("/api/ranges", get(ranges))
        .route("/api/ranges/status", get(ranges_status))
        .route("/api/assign", post(assign))
        .route("/api/undo", post(undo))
        .route("/api/finalize", post(finalize))
        .route("/api/solution", get(solution))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    eprintln!("prange: serving on http://{}", listener.local_addr()?);
    if lock(&state).session.is_some() {
        if let Err(e) = start_ranges(&state) {
            log::info!("no initial range job: {e}");
        }
    }
    axum::serve(listener, router(state)).await
}
