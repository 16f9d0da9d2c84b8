//! HTTP API: onboarding, level serving with fallback, and event ingestion
//! that triggers background regeneration for the personalized group.

use std::collections::HashSet;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pcg_core::levelgen::{BatchSource, LevelBatch};
use pcg_core::pipeline::{self, Generator};
use pcg_core::telemetry::{
    Ack, Clock, EventKind, GameplayRecord, Group, LevelRunEvent, PlayerProfile, Store, SystemClock, TelemetryError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub struct AppState {
    store: Mutex<Store>,
    generator: Generator,
    rng: Mutex<ChaCha8Rng>,
    in_flight: Mutex<HashSet<String>>,
    clock: Arc<dyn Clock>,
    cold_open_wait: Duration,
}

impl AppState {
    pub fn new(store: Store, generator: Generator, seed: Option<u64>) -> Self {
        let rng = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        Self {
            store: Mutex::new(store),
            generator,
            rng: Mutex::new(rng),
            in_flight: Mutex::new(HashSet::new()),
            clock: Arc::new(SystemClock),
            cold_open_wait: Duration::from_secs(60),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// How long a first request waits for a cold-open batch when there is
    /// nothing older to serve.
    pub fn with_cold_open_wait(mut self, wait: Duration) -> Self {
        self.cold_open_wait = wait;
        self
    }

    pub fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn in_flight(&self) -> MutexGuard<'_, HashSet<String>> {
        self.in_flight.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn is_generating(&self, player_id: &str) -> bool {
        self.in_flight().contains(player_id)
    }

    /// Waits until no generation is running, or `timeout` elapses.
    pub async fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while !self.in_flight().is_empty() {
            if Instant::now() >= deadline {
                return false;
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        true
    }

    fn profile(&self, player_id: &str) -> Result<PlayerProfile, ApiError> {
        self.store().profile(player_id).cloned().ok_or_else(|| ApiError::not_found(player_id))
    }

    /// Generates until the pending batch reflects every rated run.
    fn regenerate(&self, player_id: &str, rng: &mut ChaCha8Rng) {
        loop {
            let Some(profile) = self.store().profile(player_id).cloned() else { return };
            if profile.pending_is_fresh() {
                return;
            }
            let request = self.generator.request_for(&profile);
            tracing::debug!(player_id, history = request.history_len(), "generating levels");
            let batch = self.generator.generate(&request, rng, self.clock.now());
            if let Err(e) = pipeline::record_batch(&mut self.store(), player_id, &batch, profile.rated_count()) {
                tracing::error!(player_id, error = %e, "could not store generated batch");
                return;
            }
        }
    }
}

struct InFlight {
    state: Arc<AppState>,
    player_id: String,
}

impl Drop for InFlight {
    fn drop(&mut self) {
        self.state.in_flight().remove(&self.player_id);
    }
}

/// Starts background regeneration unless one is already running for the
/// player. Returns whether a new task was started.
pub fn start_regeneration(state: &Arc<AppState>, player_id: &str) -> bool {
    if !state.in_flight().insert(player_id.to_string()) {
        return false;
    }
    let mut rng = {
        let mut shared = state.rng.lock().unwrap_or_else(|p| p.into_inner());
        ChaCha8Rng::from_rng(&mut *shared)
    };
    let guard = InFlight { state: Arc::clone(state), player_id: player_id.to_string() };
    tokio::task::spawn_blocking(move || {
        guard.state.regenerate(&guard.player_id, &mut rng);
        drop(guard);
    });
    true
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    reasons: Vec<String>,
}

impl ApiError {
    fn not_found(player_id: &str) -> Self {
        Self { status: StatusCode::NOT_FOUND, message: format!("unknown player {player_id}"), reasons: vec![] }
    }

    fn invalid(reasons: Vec<String>) -> Self {
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, message: "validation failed".into(), reasons }
    }
}

impl From<TelemetryError> for ApiError {
    fn from(e: TelemetryError) -> Self {
        match e {
            TelemetryError::UnknownPlayer(id) => Self::not_found(&id),
            TelemetryError::Rejected(msg) => Self::invalid(msg.split("; ").map(String::from).collect()),
            other => Self { status: StatusCode::INTERNAL_SERVER_ERROR, message: other.to_string(), reasons: vec![] },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "reasons": self.reasons }))).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Onboarded {
    pub player_id: String,
    pub group: Group,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompletionPayload {
    pub record: GameplayRecord,
    pub rating: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventPayload {
    #[serde(default)]
    pub level_in_row: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn status(ack: Ack) -> Json<Value> {
    let s = match ack {
        Ack::Recorded => "recorded",
        Ack::Duplicate => "duplicate",
    };
    Json(json!({ "status": s }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/players", post(onboard))
        .route("/api/players/{id}/levels", get(levels))
        .route("/api/players/{id}/complete", post(complete))
        .route("/api/players/{id}/events", post(events))
        .with_state(state)
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn onboard(State(state): State<Arc<AppState>>) -> Result<(StatusCode, Json<Onboarded>), ApiError> {
    let bytes: [u8; 16] = state.rng.lock().unwrap_or_else(|p| p.into_inner()).random();
    let player_id = uuid::Builder::from_random_bytes(bytes).into_uuid().to_string();
    let group = state.store().assign_group(&player_id, state.clock.now())?;
    tracing::info!(player_id, group = group.as_str(), "player onboarded");
    if group == Group::LlmPcg {
        start_regeneration(&state, &player_id);
    }
    Ok((StatusCode::CREATED, Json(Onboarded { player_id, group })))
}

async fn levels(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<LevelBatch>, ApiError> {
    let profile = state.profile(&id)?;
    if profile.group == Group::TraditionalPcg {
        let batch = {
            let mut rng = state.rng.lock().unwrap_or_else(|p| p.into_inner());
            state.generator.traditional(&mut *rng, state.clock.now())
        };
        let mut store = state.store();
        pipeline::record_batch(&mut store, &id, &batch, profile.rated_count())?;
        store.mark_served(&id, &batch);
        return Ok(Json(batch));
    }

    if let Some(batch) = serve_fresh(&state, &id) {
        return Ok(Json(batch));
    }
    start_regeneration(&state, &id);
    if let Some(old) = profile.last_served_batch.or(profile.pending_levels) {
        return Ok(Json(LevelBatch { source: BatchSource::Fallback, ..old }));
    }
    // Nothing older exists, so the first batch is worth waiting for.
    let deadline = Instant::now() + state.cold_open_wait;
    while state.is_generating(&id) && Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    serve_fresh(&state, &id).map(Json).ok_or_else(|| ApiError {
        status: StatusCode::SERVICE_UNAVAILABLE,
        message: "levels are still being generated".into(),
        reasons: vec![],
    })
}

fn serve_fresh(state: &AppState, player_id: &str) -> Option<LevelBatch> {
    let mut store = state.store();
    let profile = store.profile(player_id)?;
    if !profile.pending_is_fresh() {
        return None;
    }
    let batch = profile.pending_levels.clone()?;
    store.mark_served(player_id, &batch);
    Some(batch)
}

async fn complete(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(payload): Json<CompletionPayload>,
) -> Result<Json<Value>, ApiError> {
    let CompletionPayload { mut record, rating } = payload;
    let mut reasons = record.problems();
    if !(1..=5).contains(&rating) {
        reasons.push(format!("rating {rating} outside 1..=5"));
    }
    if record.level_in_row == 0 {
        reasons.push("level_in_row must start at 1".into());
    }
    if !reasons.is_empty() {
        return Err(ApiError::invalid(reasons));
    }
    record.user_rating = None;
    let level = record.level_in_row;
    let (group, ack) = {
        let mut store = state.store();
        let group = store.profile(&id).map(|p| p.group).ok_or_else(|| ApiError::not_found(&id))?;
        let ev = |kind| LevelRunEvent { timestamp: state.clock.now(), player_id: id.clone(), level_in_row: level, kind };
        store.record_event(ev(EventKind::Started))?;
        let done = store.record_event(ev(EventKind::Completed { record }))?;
        let rated = store.record_event(ev(EventKind::Rated { user_rating: rating }))?;
        let ack = if done == Ack::Duplicate && rated == Ack::Duplicate { Ack::Duplicate } else { Ack::Recorded };
        (group, ack)
    };
    if group == Group::LlmPcg && ack == Ack::Recorded {
        start_regeneration(&state, &id);
    }
    Ok(status(ack))
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(payload): Json<EventPayload>,
) -> Result<Json<Value>, ApiError> {
    if matches!(payload.kind, EventKind::PlayerCreated { .. } | EventKind::BatchGenerated { .. }) {
        return Err(ApiError::invalid(vec![format!("{} events are server-generated", payload.kind.name())]));
    }
    let rated = matches!(payload.kind, EventKind::Rated { .. });
    let (group, ack) = {
        let mut store = state.store();
        let group = store.profile(&id).map(|p| p.group).ok_or_else(|| ApiError::not_found(&id))?;
        let ack = store.record_event(LevelRunEvent {
            timestamp: state.clock.now(),
            player_id: id.clone(),
            level_in_row: payload.level_in_row,
            kind: payload.kind,
        })?;
        (group, ack)
    };
    if rated && group == Group::LlmPcg && ack == Ack::Recorded {
        start_regeneration(&state, &id);
    }
    Ok(status(ack))
}
