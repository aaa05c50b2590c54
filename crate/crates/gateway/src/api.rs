//! HTTP and WebSocket interface under `/api/v1`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sb_core::control::ComfortBounds;
use sb_core::topology::Floor;
use sb_core::wire::METRIC_POWER;
use sb_telemetry::{QueryRange, RecordClass, RecordFilter, RecordValue, TelemetryRecord};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::requests::{check, RequestError};
use crate::scenario::Request;
use crate::shared::{RunStatus, Shared};
use crate::sim::{METRIC_ACTUATOR_POWER, METRIC_LIGHTING_POWER};

/// Close code sent to a stream client that fell too far behind.
pub const CLOSE_SLOW_CONSUMER: u16 = 1008;

#[derive(Debug, Clone)]
pub struct ApiConfig {
    /// Idle time after which the stream sends a heartbeat frame.
    pub heartbeat: Duration,
    /// Cap on points returned by one telemetry query.
    pub max_points: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self { heartbeat: Duration::from_secs(10), max_points: 10_000 }
    }
}

#[derive(Clone)]
struct AppState {
    shared: Arc<Shared>,
    cfg: Arc<ApiConfig>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        let status = match e {
            RequestError::Malformed(_) => StatusCode::BAD_REQUEST,
            RequestError::NotFound(_) => StatusCode::NOT_FOUND,
            RequestError::Rejected(_) => StatusCode::CONFLICT,
        };
        Self::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(shared: Arc<Shared>, cfg: ApiConfig) -> Router {
    let state = AppState { shared, cfg: Arc::new(cfg) };
    let api = Router::new()
        .route("/building", get(building))
        .route("/state", get(zone_state))
        .route("/latest", get(latest))
        .route("/telemetry", get(telemetry))
        .route("/energy", get(energy))
        .route("/diagnostics", get(diagnostics))
        .route("/sim", get(sim_status).post(sim_control))
        .route("/setpoint", post(setpoint))
        .route("/light", post(light))
        .route("/door", post(door))
        .route("/away", post(away))
        .route("/stream", get(stream));
    Router::new().nest("/api/v1", api).with_state(state)
}

/// Binds `addr` and serves until the returned task is aborted.
pub async fn spawn(
    addr: SocketAddr,
    shared: Arc<Shared>,
    cfg: ApiConfig,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(shared, cfg);
    let task = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((local, task))
}

#[derive(Serialize)]
struct BuildingSummary<'a> {
    name: &'a str,
    dt_s: f64,
    comfort: ComfortBounds,
    floors: &'a [Floor],
}

async fn building(State(s): State<AppState>) -> Response {
    let topo = &s.shared.topology;
    Json(BuildingSummary { name: &topo.name, dt_s: s.shared.dt_s, comfort: s.shared.comfort, floors: &topo.floors })
        .into_response()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterParams {
    floor: Option<u32>,
    zone: Option<String>,
    device: Option<String>,
    metric: Option<String>,
    class: Option<RecordClass>,
}

impl FilterParams {
    fn filter(self) -> RecordFilter {
        RecordFilter { floor: self.floor, zone: self.zone, device: self.device, metric: self.metric, class: self.class }
    }
}

#[derive(Debug, Serialize)]
struct ZoneState {
    zone_id: String,
    floor: u32,
    /// Latest value per device and metric.
    devices: BTreeMap<String, BTreeMap<String, LatestValue>>,
}

#[derive(Debug, Serialize)]
struct LatestValue {
    value: RecordValue,
    timestamp: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneParams {
    floor: Option<u32>,
    zone: Option<String>,
}

async fn zone_state(State(s): State<AppState>, q: Result<Query<ZoneParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let topo = &s.shared.topology;
    if let Some(z) = &q.zone {
        if topo.zone(z).is_none() {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown zone {z}")));
        }
    }
    let store = s.shared.store.read().expect("store lock");
    let mut zones = Vec::new();
    for (floor, zone) in topo.zones_with_floor() {
        if q.floor.is_some_and(|f| f != floor) || q.zone.as_ref().is_some_and(|z| z != &zone.id) {
            continue;
        }
        let filter = RecordFilter { zone: Some(zone.id.clone()), ..RecordFilter::default() };
        let mut devices: BTreeMap<String, BTreeMap<String, LatestValue>> = BTreeMap::new();
        for ((device, metric), r) in store.latest(&filter) {
            if r.class == RecordClass::Command || r.class == RecordClass::Event {
                continue;
            }
            devices.entry(device).or_default().insert(metric, LatestValue { value: r.value, timestamp: r.timestamp });
        }
        zones.push(ZoneState { zone_id: zone.id.clone(), floor, devices });
    }
    Ok(Json(zones).into_response())
}

async fn latest(State(s): State<AppState>, q: Result<Query<FilterParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let store = s.shared.store.read().expect("store lock");
    let records: Vec<TelemetryRecord> = store.latest(&q.filter()).into_values().collect();
    if records.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "no records match"));
    }
    Ok(Json(records).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TelemetryParams {
    start: Option<f64>,
    end: Option<f64>,
    max_points: Option<usize>,
    floor: Option<u32>,
    zone: Option<String>,
    device: Option<String>,
    metric: Option<String>,
    class: Option<RecordClass>,
}

async fn telemetry(State(s): State<AppState>, q: Result<Query<TelemetryParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let range = QueryRange {
        start: q.start.unwrap_or(f64::NEG_INFINITY),
        end: q.end.unwrap_or(f64::INFINITY),
        max_points: q.max_points.unwrap_or(s.cfg.max_points).min(s.cfg.max_points),
        filter: FilterParams { floor: q.floor, zone: q.zone, device: q.device, metric: q.metric, class: q.class }.filter(),
    };
    let store = s.shared.store.read().expect("store lock");
    let records = store.query(&range).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(records).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeParams {
    start: Option<f64>,
    end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub actuator_wh: f64,
    pub lighting_wh: f64,
    pub total_wh: f64,
    pub per_floor_wh: BTreeMap<u32, f64>,
}

/// Integrates metered power over `[start, end]`, each sample held for one tick.
pub fn energy_report(records: &[TelemetryRecord], dt_s: f64, start: Option<f64>, end: Option<f64>) -> EnergyReport {
    let mut out = EnergyReport {
        start,
        end,
        actuator_wh: 0.0,
        lighting_wh: 0.0,
        total_wh: 0.0,
        per_floor_wh: BTreeMap::new(),
    };
    for r in records.iter().filter(|r| r.class == RecordClass::Energy) {
        let Some(w) = r.value.as_f64() else { continue };
        let wh = w * dt_s / 3600.0;
        match r.metric.as_str() {
            METRIC_POWER => {
                out.total_wh += wh;
                if let Some(f) = r.floor {
                    *out.per_floor_wh.entry(f).or_default() += wh;
                }
            }
            METRIC_ACTUATOR_POWER => out.actuator_wh += wh,
            METRIC_LIGHTING_POWER => out.lighting_wh += wh,
            _ => {}
        }
    }
    out
}

async fn energy(State(s): State<AppState>, q: Result<Query<RangeParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let range = QueryRange {
        start: q.start.unwrap_or(f64::NEG_INFINITY),
        end: q.end.unwrap_or(f64::INFINITY),
        filter: RecordFilter { class: Some(RecordClass::Energy), ..RecordFilter::default() },
        max_points: usize::MAX,
    };
    let store = s.shared.store.read().expect("store lock");
    let records = store.query(&range).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(energy_report(&records, s.shared.dt_s, q.start, q.end)).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsParams {
    limit: Option<usize>,
}

async fn diagnostics(State(s): State<AppState>, q: Result<Query<DiagnosticsParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let d = s.shared.diagnostics.lock().expect("diagnostics lock");
    let skip = q.limit.map_or(0, |n| d.len().saturating_sub(n));
    let lines: Vec<&String> = d.iter().skip(skip).collect();
    Ok(Json(lines).into_response())
}

async fn sim_status(State(s): State<AppState>) -> Json<RunStatus> {
    Json(s.shared.status.lock().expect("status lock").clone())
}

#[derive(Debug, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
enum SimAction {
    Pause,
    Resume,
    Step {
        #[serde(default = "one")]
        ticks: u64,
    },
}

fn one() -> u64 {
    1
}

fn live_control(s: &AppState) -> ApiResult<&Arc<crate::shared::RunControl>> {
    match &s.shared.control {
        Some(c) if s.shared.is_live() => Ok(c),
        _ => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no simulation is running")),
    }
}

async fn sim_control(State(s): State<AppState>, body: Result<Json<SimAction>, JsonRejection>) -> ApiResult<Response> {
    let Json(action) = body?;
    let control = live_control(&s)?;
    match action {
        SimAction::Pause => control.pause(),
        SimAction::Resume => control.resume(),
        SimAction::Step { ticks } => control.step(ticks),
    }
    Ok(sim_status(State(s)).await.into_response())
}

async fn submit(s: AppState, kind: &str, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Response> {
    let Json(mut body) = body?;
    let Some(obj) = body.as_object_mut() else {
        return Err(ApiError::bad_request("body must be a JSON object"));
    };
    obj.insert("kind".into(), Value::String(kind.into()));
    let request: Request = serde_json::from_value(body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let control = live_control(&s)?;
    let now = s.shared.status.lock().expect("status lock").time_s;
    let routed = check(&s.shared.topology, &s.shared.comfort, &request, now)?;
    control.submit(request);
    let floors: Vec<u32> = routed.iter().map(|(f, _)| *f).collect();
    Ok((StatusCode::OK, Json(json!({ "accepted": true, "floors": floors }))).into_response())
}

async fn setpoint(State(s): State<AppState>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Response> {
    submit(s, "setpoint", body).await
}

async fn light(State(s): State<AppState>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Response> {
    submit(s, "light", body).await
}

async fn door(State(s): State<AppState>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Response> {
    submit(s, "door", body).await
}

async fn away(State(s): State<AppState>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Response> {
    submit(s, "away", body).await
}

async fn stream(
    State(s): State<AppState>,
    q: Result<Query<FilterParams>, QueryRejection>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let filter = q.filter();
    Ok(ws.on_upgrade(move |socket| pump(socket, s, filter)))
}

async fn pump(mut socket: WebSocket, s: AppState, filter: RecordFilter) {
    let mut rx = s.shared.stream.subscribe();
    let heartbeat = s.cfg.heartbeat;
    loop {
        tokio::select! {
            batch = rx.recv() => match batch {
                Ok(batch) => {
                    for r in batch.iter().filter(|r| filter.matches(r)) {
                        let text = serde_json::to_string(r).expect("record serializes");
                        if socket.send(Message::Text(text.into())).await.is_err() {
                            return;
                        }
                    }
                }
                Err(RecvError::Lagged(missed)) => {
                    tracing::warn!(missed, "closing stream for slow consumer");
                    let frame = CloseFrame { code: CLOSE_SLOW_CONSUMER, reason: "slow consumer".into() };
                    let _ = socket.send(Message::Close(Some(frame))).await;
                    return;
                }
                Err(RecvError::Closed) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
            _ = tokio::time::sleep(heartbeat) => {
                let status = s.shared.status.lock().expect("status lock").clone();
                let beat = json!({ "type": "heartbeat", "tick": status.tick, "time_s": status.time_s });
                if socket.send(Message::Text(beat.to_string().into())).await.is_err() {
                    return;
                }
            }
        }
    }
}
