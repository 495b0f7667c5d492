//! HTTP/WebSocket front end. Every route is mounted under `/api/v1` and,
//! for convenience, under `/api`.
//!
//! Malformed JSON is a 400 naming the JSON path that failed to parse.
//! Well-formed input that the core rejects is a 422 naming the field.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::mpsc;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;
use trailer_lab_core::lqr::{build_schedule, GainSchedule, LqWeights, DEFAULT_GRID_COUNT};
use trailer_lab_core::model::{alpha_max, VehicleParams};
use trailer_lab_core::sim::io::trace_to_csv;
use trailer_lab_core::sim::metrics::tracking_report;
use trailer_lab_core::sim::{
    paths, simulate_with_schedule, Body, CompletionStatus, DisturbanceConfig, Rates, SimOutcome, SimScenario,
    Simulation, SimulationTrace, TraceRow, TrackingReport, DEFAULT_MAX_SIM_TIME, DEFAULT_SPEED,
};
use trailer_lab_core::tracker::{PiecewiseLinearPath, Point, TrackerConfig};
use trailer_lab_core::Error;

use crate::feasibility::{validate_path, PathFeasibility};

/// Longest simulated time a single request may ask for, seconds.
pub const MAX_SIM_TIME: f64 = 600.0;
/// Largest schedule grid a request may ask for.
pub const MAX_GRID_COUNT: usize = 2001;
/// Live streams flush at least this often while rows are being produced.
pub const LIVE_FLUSH_INTERVAL: Duration = Duration::from_millis(50);
const LIVE_MAX_BATCH: usize = 2000;
const CACHE_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>, field: Option<String>) -> Self {
        Self { status: status.as_u16(), error: error.into(), field }
    }

    fn bad_request(error: impl Into<String>, field: Option<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, field)
    }

    fn unprocessable(error: impl Into<String>, field: Option<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error, field)
    }

    fn internal(error: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, error, None)
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        match err {
            Error::Invalid { field, reason } => Self::unprocessable(format!("invalid {field}: {reason}"), Some(field)),
            other => Self::unprocessable(other.to_string(), None),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// Strict JSON parse that reports the path of the first offending value.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        ApiError::bad_request(format!("malformed JSON: {}", e.inner()), field)
    })?;
    de.end().map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}"), None))?;
    Ok(value)
}

/// Immutable gain schedules keyed by the inputs that determine them.
#[derive(Debug, Default)]
pub struct ScheduleCache {
    entries: RwLock<HashMap<String, Arc<GainSchedule>>>,
}

impl ScheduleCache {
    pub fn get_or_build(
        &self,
        params: &VehicleParams,
        weights: &LqWeights,
        grid_count: usize,
    ) -> Result<Arc<GainSchedule>, Error> {
        let key = serde_json::to_string(&(params, weights, grid_count)).expect("plain data serializes");
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(build_schedule(params, weights, grid_count)?);
        let mut entries = self.entries.write().expect("cache lock");
        if entries.len() >= CACHE_CAPACITY {
            entries.clear();
        }
        Ok(Arc::clone(entries.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
pub struct AppState {
    pub schedules: ScheduleCache,
}

type Shared = Arc<AppState>;

/// Request-level limits on top of the core's own validation.
fn check_limits(scenario: &SimScenario) -> Result<(), ApiError> {
    if scenario.max_sim_time > MAX_SIM_TIME {
        return Err(ApiError::unprocessable(
            format!("invalid max_sim_time: at most {MAX_SIM_TIME} s per request"),
            Some("max_sim_time".into()),
        ));
    }
    if scenario.schedule_grid_count > MAX_GRID_COUNT {
        return Err(ApiError::unprocessable(
            format!("invalid schedule_grid_count: at most {MAX_GRID_COUNT}"),
            Some("schedule_grid_count".into()),
        ));
    }
    Ok(())
}

fn prepare(state: &AppState, scenario: &SimScenario) -> Result<Arc<GainSchedule>, ApiError> {
    scenario.validate()?;
    check_limits(scenario)?;
    Ok(state.schedules.get_or_build(&scenario.params, &scenario.weights, scenario.schedule_grid_count)?)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPolylines {
    pub trailer: Vec<Point>,
    pub dolly: Vec<Point>,
    pub truck: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingInfo {
    pub stabilizer_hz: f64,
    pub tracker_hz: f64,
    pub integrator_dt: f64,
    pub rows: usize,
    /// Simulated seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResponse {
    pub trace: SimulationTrace,
    pub report: TrackingReport,
    pub polylines: BodyPolylines,
    pub timing: TimingInfo,
}

impl SimResponse {
    pub fn new(scenario: &SimScenario, outcome: SimOutcome) -> Self {
        let SimOutcome { trace, report } = outcome;
        let [trailer, dolly, truck] = Body::ALL.map(|b| trace.body_polyline(b));
        let timing = TimingInfo {
            stabilizer_hz: scenario.rates.stabilizer_hz,
            tracker_hz: scenario.rates.tracker_hz,
            integrator_dt: scenario.rates.integrator_dt,
            rows: trace.rows.len(),
            duration: trace.duration(),
        };
        Self { trace, report, polylines: BodyPolylines { trailer, dolly, truck }, timing }
    }
}

async fn simulate(State(state): State<Shared>, body: Bytes) -> Result<Json<SimResponse>, ApiError> {
    let scenario: SimScenario = parse(&body)?;
    let response = blocking(move || {
        let schedule = prepare(&state, &scenario)?;
        let outcome = simulate_with_schedule(&scenario, &schedule)?;
        tracing::debug!(status = ?outcome.report.status, rows = outcome.trace.rows.len(), "simulated");
        Ok(SimResponse::new(&scenario, outcome))
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub params: VehicleParams,
    /// Largest steering angle with a circular equilibrium for `params`.
    pub alpha_max: f64,
    pub weights: LqWeights,
    pub tracker: TrackerConfig,
    pub rates: Rates,
    pub speed: f64,
    pub max_sim_time: f64,
    pub schedule_grid_count: usize,
    pub disturbances: DisturbanceConfig,
    pub presets: BTreeMap<String, SimScenario>,
}

impl Defaults {
    pub fn current() -> Self {
        let params = VehicleParams::test_platform();
        let presets = [
            ("straight", paths::straight_line_scenario()),
            ("eight", paths::eight_scenario()),
            ("parking", paths::parking_scenario()),
            ("roa", paths::roa_base_scenario()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            params,
            alpha_max: alpha_max(&params),
            weights: LqWeights::default(),
            tracker: TrackerConfig::default(),
            rates: Rates::default(),
            speed: DEFAULT_SPEED,
            max_sim_time: DEFAULT_MAX_SIM_TIME,
            schedule_grid_count: DEFAULT_GRID_COUNT,
            disturbances: DisturbanceConfig::default(),
            presets,
        }
    }
}

async fn defaults() -> Json<Defaults> {
    Json(Defaults::current())
}

/// A path in the shared path format, optionally with the vehicle and
/// tracker to judge it against.
#[derive(Debug, Clone, Deserialize)]
struct ValidatePathRequest {
    #[serde(flatten)]
    path: PiecewiseLinearPath,
    #[serde(default = "VehicleParams::test_platform")]
    params: VehicleParams,
    #[serde(default)]
    tracker: TrackerConfig,
}

async fn validate_path_route(body: Bytes) -> Result<Json<PathFeasibility>, ApiError> {
    let req: ValidatePathRequest = parse(&body)?;
    Ok(Json(validate_path(&req.path, &req.params, &req.tracker)?))
}

#[derive(Debug, Clone, Deserialize)]
struct ScheduleQuery {
    grid: Option<usize>,
}

async fn schedule(
    State(state): State<Shared>,
    query: Result<Query<ScheduleQuery>, QueryRejection>,
) -> Result<Json<GainSchedule>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text(), Some("grid".into())))?;
    let grid = q.grid.unwrap_or(DEFAULT_GRID_COUNT);
    if grid > MAX_GRID_COUNT {
        return Err(ApiError::unprocessable(format!("invalid grid: at most {MAX_GRID_COUNT}"), Some("grid".into())));
    }
    let schedule = blocking(move || {
        state.schedules.get_or_build(&VehicleParams::test_platform(), &LqWeights::default(), grid).map_err(
            |e| match e {
                Error::Invalid { reason, .. } => {
                    ApiError::unprocessable(format!("invalid grid: {reason}"), Some("grid".into()))
                }
                other => other.into(),
            },
        )
    })
    .await?;
    Ok(Json(GainSchedule::clone(&schedule)))
}

/// Validated scenario ready to hand to the vehicle, with digests so the
/// receiving side can check what it got. The document is also a valid run
/// manifest for the command-line front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub scenario: SimScenario,
    pub status: CompletionStatus,
    pub scenario_sha256: String,
    pub trace_csv_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

async fn export(State(state): State<Shared>, body: Bytes) -> Result<Json<ExportDocument>, ApiError> {
    let scenario: SimScenario = parse(&body)?;
    let doc = blocking(move || {
        let schedule = prepare(&state, &scenario)?;
        let outcome = simulate_with_schedule(&scenario, &schedule)?;
        let status = outcome.report.status;
        if status != CompletionStatus::GoalReached {
            return Err(ApiError::unprocessable(
                format!(
                    "scenario does not reach the goal (status {})",
                    serde_json::to_string(&status).unwrap_or_default()
                ),
                None,
            ));
        }
        let canonical = serde_json::to_string(&scenario).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(ExportDocument {
            scenario_sha256: sha256_hex(canonical.as_bytes()),
            trace_csv_sha256: sha256_hex(trace_to_csv(&outcome.trace).as_bytes()),
            scenario,
            status,
        })
    })
    .await?;
    Ok(Json(doc))
}

/// Messages sent over the live socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LiveMessage {
    Rows { rows: Vec<TraceRow> },
    Done { status: CompletionStatus, rows: usize, report: TrackingReport },
    Error(ApiError),
}

async fn live(ws: WebSocketUpgrade, State(state): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| live_session(socket, state))
}

/// Each text frame is a scenario; rows stream back in batches, then a
/// `done` message with the report. Several runs may share one socket.
async fn live_session(mut socket: WebSocket, state: Shared) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        if stream_run(&mut socket, &state, text.as_str()).await.is_err() {
            break;
        }
    }
}

async fn send(socket: &mut WebSocket, msg: &LiveMessage) -> Result<(), axum::Error> {
    let text = serde_json::to_string(msg).expect("live messages serialize");
    socket.send(Message::Text(text.into())).await
}

async fn stream_run(socket: &mut WebSocket, state: &Shared, text: &str) -> Result<(), axum::Error> {
    let scenario: SimScenario = match parse(text.as_bytes()) {
        Ok(s) => s,
        Err(e) => return send(socket, &LiveMessage::Error(e)).await,
    };
    let (tx, mut rx) = mpsc::channel::<LiveMessage>(8);
    let state = Arc::clone(state);
    let producer = tokio::task::spawn_blocking(move || {
        let msg = match produce(&state, &scenario, &tx) {
            Ok(Some(done)) => done,
            Ok(None) => return,
            Err(e) => LiveMessage::Error(e),
        };
        let _ = tx.blocking_send(msg);
    });
    while let Some(msg) = rx.recv().await {
        send(socket, &msg).await?;
    }
    producer.await.map_err(axum::Error::new)
}

/// Runs the simulation, pushing row batches into `tx`. Returns `None` when
/// the receiver went away.
fn produce(
    state: &AppState,
    scenario: &SimScenario,
    tx: &mpsc::Sender<LiveMessage>,
) -> Result<Option<LiveMessage>, ApiError> {
    let schedule = prepare(state, scenario)?;
    let mut sim = Simulation::new(scenario, &schedule)?;
    let mut rows = Vec::new();
    let mut flushed = 0;
    let mut last = Instant::now();
    for row in sim.by_ref() {
        rows.push(row);
        if last.elapsed() >= LIVE_FLUSH_INTERVAL || rows.len() - flushed >= LIVE_MAX_BATCH {
            if tx.blocking_send(LiveMessage::Rows { rows: rows[flushed..].to_vec() }).is_err() {
                return Ok(None);
            }
            flushed = rows.len();
            last = Instant::now();
        }
    }
    if flushed < rows.len() && tx.blocking_send(LiveMessage::Rows { rows: rows[flushed..].to_vec() }).is_err() {
        return Ok(None);
    }
    let status = sim.status().unwrap_or(CompletionStatus::TimedOut);
    let trace = SimulationTrace { stabilizer_hz: scenario.rates.stabilizer_hz, rows };
    let report = tracking_report(&trace, &scenario.path, None, status)?;
    Ok(Some(LiveMessage::Done { status, rows: trace.rows.len(), report }))
}

fn api() -> Router<Shared> {
    Router::new()
        .route("/simulate", post(simulate))
        .route("/defaults", get(defaults))
        .route("/validate-path", post(validate_path_route))
        .route("/schedule", get(schedule))
        .route("/export", post(export))
        .route("/live", get(live))
}

pub fn router(state: Shared, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new().nest("/api/v1", api()).nest("/api", api());
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(TraceLayer::new_for_http()).with_state(state)
}

pub async fn serve(bind: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    let app = router(Arc::new(AppState::default()), static_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}
