//! HTTP/JSON service for the operator console.
//!
//! One stepping thread owns the simulator. Between ticks it applies queued
//! commands, then publishes an immutable snapshot (served by the GET
//! endpoints) and a tick event (fanned out to `/api/events` subscribers).

use std::convert::Infallible;
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use helioview::render::{NeighborHeliostat, TargetPanel};
use helioview::sim::{Command, CommandError, FieldSim, LoopKind, LoopOutput, ScenarioConfig, TickOutput};
use helioview::vision::{Detection, Image};
use helioview::{PixelPoint, Pose, TrackingError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, oneshot, watch};

/// Real-time multiplier used when none is given.
pub const DEFAULT_SPEED: f64 = 10.0;

/// How fast the stepping thread advances simulated time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pace {
    /// `n` simulated seconds per wall-clock second.
    Speed(f64),
    /// As fast as the simulator can step.
    Unthrottled,
}

impl Pace {
    /// `speed <= 0` means unthrottled.
    pub fn from_speed(speed: f64) -> Self {
        if speed > 0.0 && speed.is_finite() {
            Pace::Speed(speed)
        } else {
            Pace::Unthrottled
        }
    }

    fn period(&self, tick_s: f64) -> Option<Duration> {
        match self {
            Pace::Speed(n) => Some(Duration::from_secs_f64(tick_s / n)),
            Pace::Unthrottled => None,
        }
    }
}

/// Scenario adapted for interactive use: only the timeline entries at the
/// start survive, so later scripted mode changes do not override operators.
pub fn interactive(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.timeline.retain(|e| e.time_s <= 0.0);
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopView {
    pub mode: String,
    pub pose: Pose,
    pub encoder: Pose,
    pub command: Pose,
    pub sun_center: Option<PixelPoint>,
    pub target_center: Option<PixelPoint>,
    pub aim_point: Option<PixelPoint>,
    pub tracking_error: Option<TrackingError>,
    pub shadow: bool,
    pub block: bool,
    pub cloud_tto_s: Option<f64>,
    pub detections: Vec<Detection>,
}

impl LoopView {
    fn from_output(out: &LoopOutput) -> Self {
        let r = &out.record;
        Self {
            mode: r.mode.clone(),
            pose: r.pose,
            encoder: r.encoder,
            command: r.command,
            sun_center: r.sun_center,
            target_center: r.target_center,
            aim_point: r.aim_point,
            tracking_error: r.error,
            shadow: r.shadow,
            block: r.block,
            cloud_tto_s: r.cloud_tto_s,
            detections: out.detections.clone(),
        }
    }
}

/// Per-tick state of one heliostat: the vision loop at the top level, the
/// ephemeris baseline alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeliostatView {
    pub id: String,
    pub tick: u64,
    pub time_s: f64,
    pub stow_in_progress: bool,
    /// Where the frame these detections came from can be fetched.
    pub frame: String,
    #[serde(flatten)]
    pub vision: LoopView,
    pub baseline: LoopView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickEvent {
    pub tick: u64,
    pub time_s: f64,
    pub heliostats: Vec<HeliostatView>,
}

pub struct Snapshot {
    pub event: TickEvent,
    pub vision_frame: Image,
    pub scada_frame: Image,
}

impl Snapshot {
    fn new(sim: &FieldSim, out: TickOutput) -> Self {
        let id = sim.config().heliostat.id.clone();
        let view = HeliostatView {
            frame: format!("/api/frames/{id}"),
            id,
            tick: out.tick,
            time_s: out.vision.record.time_s,
            stow_in_progress: sim.stow_in_progress(),
            vision: LoopView::from_output(&out.vision),
            baseline: LoopView::from_output(&out.scada),
        };
        Self {
            event: TickEvent { tick: out.tick, time_s: view.time_s, heliostats: vec![view] },
            vision_frame: out.vision.frame,
            scada_frame: out.scada.frame,
        }
    }

    fn heliostat(&self, id: &str) -> Option<&HeliostatView> {
        self.event.heliostats.iter().find(|h| h.id == id)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CameraInfo {
    pub width_px: u32,
    pub height_px: u32,
    pub focal_mm: f64,
    pub pixel_pitch_mm: f64,
    pub focal_px: f64,
    pub principal_point: PixelPoint,
    pub pointing_uncertainty_mrad: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeliostatLayout {
    pub id: String,
    pub position_m: [f64; 3],
    pub rate_limits_deg_s: [f64; 2],
}

/// Static part of `/api/field`.
#[derive(Debug, Clone, Serialize)]
pub struct FieldLayout {
    pub scenario: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub start: String,
    pub tick_s: f64,
    /// Real-time multiplier; absent when unthrottled.
    pub speed: Option<f64>,
    pub camera: CameraInfo,
    pub target: TargetPanel,
    pub neighbors: Vec<NeighborHeliostat>,
    pub heliostats: Vec<HeliostatLayout>,
    pub deadband_px: f64,
}

impl FieldLayout {
    fn new(sim: &FieldSim, pace: Pace) -> Self {
        let cfg = sim.config();
        let cam = sim.camera();
        Self {
            scenario: cfg.name.clone(),
            latitude_deg: cfg.site.latitude_deg,
            longitude_deg: cfg.site.longitude_deg,
            start: cfg.start.clone(),
            tick_s: cfg.tick_s,
            speed: match pace {
                Pace::Speed(n) => Some(n),
                Pace::Unthrottled => None,
            },
            camera: CameraInfo {
                width_px: cam.width_px(),
                height_px: cam.height_px(),
                focal_mm: cam.focal_mm(),
                pixel_pitch_mm: cam.pixel_pitch_mm(),
                focal_px: cam.focal_px(),
                principal_point: cam.principal_point(),
                pointing_uncertainty_mrad: cam.pointing_uncertainty_mrad(),
            },
            target: sim.scene().target.clone(),
            neighbors: sim.scene().neighbors.clone(),
            heliostats: vec![HeliostatLayout {
                id: cfg.heliostat.id.clone(),
                position_m: cfg.heliostat.position_m,
                rate_limits_deg_s: cfg.heliostat.rate_limits_deg_s,
            }],
            deadband_px: cfg.controller.deadband_px,
        }
    }
}

struct Pending {
    command: Command,
    reply: oneshot::Sender<(u64, Result<String, CommandError>)>,
}

/// Shared handle held by the router. Dropping every clone stops the
/// stepping thread.
#[derive(Clone)]
pub struct AppState {
    layout: Arc<FieldLayout>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
    events: broadcast::Sender<Arc<Snapshot>>,
    commands: mpsc::Sender<Pending>,
}

impl AppState {
    /// Steps the first tick, then hands the simulator to its own thread.
    pub fn start(mut sim: FieldSim, pace: Pace) -> Self {
        let layout = Arc::new(FieldLayout::new(&sim, pace));
        let first = sim.tick_unbounded();
        let (snap_tx, snapshots) = watch::channel(Arc::new(Snapshot::new(&sim, first)));
        let (events, _) = broadcast::channel(256);
        let (commands, queue) = mpsc::channel();
        let period = pace.period(sim.config().tick_s);
        let ev_tx = events.clone();
        std::thread::Builder::new()
            .name("field-sim".into())
            .spawn(move || step_loop(sim, period, queue, snap_tx, ev_tx))
            .expect("spawn stepping thread");
        Self { layout, snapshots, events, commands }
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.snapshots.borrow().clone()
    }

    fn knows(&self, id: &str) -> bool {
        self.layout.heliostats.iter().any(|h| h.id == id)
    }
}

fn step_loop(
    mut sim: FieldSim,
    period: Option<Duration>,
    queue: mpsc::Receiver<Pending>,
    snapshots: watch::Sender<Arc<Snapshot>>,
    events: broadcast::Sender<Arc<Snapshot>>,
) {
    let mut due = Instant::now() + period.unwrap_or_default();
    loop {
        loop {
            let wait = due.saturating_duration_since(Instant::now());
            let next = if wait.is_zero() {
                match queue.try_recv() {
                    Ok(p) => Some(p),
                    Err(TryRecvError::Empty) => None,
                    Err(TryRecvError::Disconnected) => return,
                }
            } else {
                match queue.recv_timeout(wait) {
                    Ok(p) => Some(p),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            };
            let Some(p) = next else { break };
            let result = sim.command(&p.command).map(|m| m.label().to_string());
            let _ = p.reply.send((sim.tick_index(), result));
        }
        let out = sim.tick_unbounded();
        let snap = Arc::new(Snapshot::new(&sim, out));
        snapshots.send_replace(snap.clone());
        // No subscribers is fine.
        let _ = events.send(snap);
        if let Some(p) = period {
            due = (due + p).max(Instant::now());
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/field", get(field))
        .route("/api/heliostats/{id}", get(heliostat))
        .route("/api/heliostats/{id}/command", post(command))
        .route("/api/frames/{id}", get(frame))
        .route("/api/events", get(events))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn unknown(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown heliostat `{id}`"))
}

async fn field(State(st): State<AppState>) -> Response {
    let snap = st.latest();
    Json(json!({
        "layout": &*st.layout,
        "tick": snap.event.tick,
        "time_s": snap.event.time_s,
        "heliostats": &snap.event.heliostats,
    }))
    .into_response()
}

async fn heliostat(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    let snap = st.latest();
    match snap.heliostat(&id) {
        Some(h) => Json(h).into_response(),
        None => unknown(&id),
    }
}

async fn command(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Command>, JsonRejection>,
) -> Response {
    if !st.knows(&id) {
        return unknown(&id);
    }
    let command = match body {
        Ok(Json(c)) => c,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    let (reply, rx) = oneshot::channel();
    if st.commands.send(Pending { command, reply }).is_err() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "simulator stopped");
    }
    match rx.await {
        Ok((tick, Ok(mode))) => Json(json!({ "id": id, "mode": mode, "effective_tick": tick })).into_response(),
        Ok((_, Err(e @ CommandError::StowInterlock))) => error(StatusCode::CONFLICT, e.to_string()),
        Ok((_, Err(e @ CommandError::Invalid(_)))) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "simulator stopped"),
    }
}

#[derive(Debug, Deserialize)]
struct FrameQuery {
    format: Option<String>,
    #[serde(rename = "loop")]
    kind: Option<LoopKind>,
}

async fn frame(
    State(st): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<FrameQuery>, axum::extract::rejection::QueryRejection>,
) -> Response {
    if !st.knows(&id) {
        return unknown(&id);
    }
    let Ok(Query(q)) = query else {
        return error(StatusCode::BAD_REQUEST, "query: format=ppm|png, loop=vision|scada");
    };
    let snap = st.latest();
    let img = match q.kind.unwrap_or(LoopKind::Vision) {
        LoopKind::Vision => &snap.vision_frame,
        LoopKind::Scada => &snap.scada_frame,
    };
    let tick = snap.event.tick.to_string();
    match q.format.as_deref().unwrap_or("ppm") {
        "ppm" => ([(header::CONTENT_TYPE, "image/x-portable-pixmap"), (header::ETAG, tick.as_str())], img.to_ppm_bytes())
            .into_response(),
        "png" => match img.to_png_bytes() {
            Ok(bytes) => ([(header::CONTENT_TYPE, "image/png"), (header::ETAG, tick.as_str())], bytes).into_response(),
            Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        },
        other => error(StatusCode::BAD_REQUEST, format!("unknown format `{other}`")),
    }
}

fn tick_event(snap: &Snapshot) -> Event {
    Event::default()
        .event("tick")
        .id(snap.event.tick.to_string())
        .json_data(&snap.event)
        .expect("tick events serialize")
}

/// Latest tick first, then every later tick. Ticks a slow subscriber misses
/// are skipped, never reordered.
fn tick_stream(st: &AppState) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = st.events.subscribe();
    let first = st.latest();
    futures::stream::unfold((Some(first), rx, None::<u64>), |(pending, mut rx, last)| async move {
        if let Some(snap) = pending {
            let tick = snap.event.tick;
            return Some((Ok(tick_event(&snap)), (None, rx, Some(tick))));
        }
        loop {
            match rx.recv().await {
                Ok(snap) if last.is_some_and(|l| snap.event.tick <= l) => continue,
                Ok(snap) => {
                    let tick = snap.event.tick;
                    return Some((Ok(tick_event(&snap)), (None, rx, Some(tick))));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    })
}

async fn events(State(st): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    Sse::new(tick_stream(&st)).keep_alive(KeepAlive::default())
}
