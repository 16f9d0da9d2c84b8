use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pcg_core::levelgen::{BatchSource, LevelBatch, LevelParams, ParamRanges};
use pcg_core::personalization::{LlmClient, LlmError, LlmRequest, MockLlmClient, MockThresholds};
use pcg_core::telemetry::GameplayRecord;
use pcg_core::{Generator, Store};
use pcg_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    app: Router,
    state: Arc<AppState>,
}

fn harness(client: Arc<dyn LlmClient>) -> Harness {
    let generator = Generator { client, ranges: ParamRanges::default(), retries: 2 };
    let state = Arc::new(AppState::new(Store::in_memory(), generator, Some(5)));
    Harness { app: router(Arc::clone(&state)), state }
}

impl Harness {
    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    async fn onboard(&self) -> (String, String) {
        let (status, body) = self.call(Method::POST, "/api/players", None).await;
        assert_eq!(status, StatusCode::CREATED);
        (body["player_id"].as_str().unwrap().to_string(), body["group"].as_str().unwrap().to_string())
    }

    async fn onboard_into(&self, group: &str) -> String {
        loop {
            let (id, g) = self.onboard().await;
            if g == group {
                return id;
            }
        }
    }

    async fn levels(&self, id: &str) -> LevelBatch {
        let (status, body) = self.call(Method::GET, &format!("/api/players/{id}/levels"), None).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_value(body).unwrap()
    }

    async fn complete(&self, id: &str, record: &GameplayRecord, rating: u8) -> (StatusCode, Value) {
        let payload = json!({ "record": record, "rating": rating });
        self.call(Method::POST, &format!("/api/players/{id}/complete"), Some(payload)).await
    }

    async fn idle(&self) {
        assert!(self.state.wait_idle(Duration::from_secs(10)).await, "generation did not finish");
    }
}

fn record(level: u32, params: &LevelParams) -> GameplayRecord {
    GameplayRecord {
        level_in_row: level,
        score: params.score_goal as u32 + 300,
        score_goal: params.score_goal as u32,
        moves_left: 6,
        num_moves: params.num_moves as u32,
        num_failed_moves: 2,
        num_clicks_on_board: 50,
        num_boosters_used: 1,
        user_rating: None,
        level_params: params.clone(),
    }
}

fn in_ranges(batch: &LevelBatch) -> bool {
    let r = ParamRanges::default();
    batch.levels.len() == 3
        && batch.levels.iter().all(|p| {
            r.num_different_pieces.contains(p.num_different_pieces)
                && r.score_goal.contains(p.score_goal)
                && r.board_width.contains(p.board_width)
                && r.board_height.contains(p.board_height)
                && r.num_moves.contains(p.num_moves)
                && r.goal_count.contains(p.collection_goals.len() as i64)
                && p.collection_goals.len() as i64 <= p.num_different_pieces
                && p.collection_goals.iter().all(|&g| r.goal_value.contains(g))
        })
}

#[tokio::test]
async fn health_and_onboarding_contract() {
    let h = harness(Arc::new(MockLlmClient::default()));
    let (status, body) = h.call(Method::GET, "/healthz", None).await;
    assert_eq!((status, body), (StatusCode::OK, json!({ "status": "ok" })));

    let (status, body) = h.call(Method::POST, "/api/players", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let keys: Vec<&String> = body.as_object().unwrap().keys().collect();
    assert_eq!(keys, vec!["group", "player_id"]);
    let (a, _) = h.onboard().await;
    let (b, _) = h.onboard().await;
    assert_ne!(a, b);
    h.idle().await;
}

#[tokio::test]
async fn thousand_onboards_split_evenly() {
    let h = harness(Arc::new(MockLlmClient::default()));
    let mut llm = 0;
    for _ in 0..1_000 {
        if h.onboard().await.1 == "llm_pcg" {
            llm += 1;
        }
    }
    assert!((460..=540).contains(&llm), "{llm} of 1000 in llm_pcg");
    h.idle().await;
}

#[tokio::test]
async fn unknown_player_is_not_found() {
    let h = harness(Arc::new(MockLlmClient::default()));
    let (status, _) = h.call(Method::GET, "/api/players/nobody/levels", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let params = ParamRanges::default();
    let p = LevelParams {
        num_different_pieces: params.num_different_pieces.min,
        score_goal: 900,
        board_width: 4,
        board_height: 4,
        num_moves: 25,
        collection_goals: vec![5, 5],
    };
    assert_eq!(h.complete("nobody", &record(1, &p), 3).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn traditional_players_get_fresh_batches_and_no_model_calls() {
    let mock = Arc::new(MockLlmClient::default());
    let h = harness(mock.clone());
    let id = h.onboard_into("traditional_pcg").await;
    h.idle().await;
    let calls = mock.calls();
    let first = h.levels(&id).await;
    let second = h.levels(&id).await;
    assert_eq!(first.source, BatchSource::Traditional);
    assert!(in_ranges(&first) && in_ranges(&second));
    assert_ne!(first.levels, second.levels);

    let (status, body) = h.complete(&id, &record(1, &second.levels[0]), 4).await;
    assert_eq!((status, body), (StatusCode::OK, json!({ "status": "recorded" })));
    h.idle().await;
    assert_eq!(mock.calls(), calls);
}

#[tokio::test]
async fn personalized_cold_open_then_history() {
    let mock = Arc::new(MockLlmClient::default());
    let h = harness(mock.clone());
    let id = h.onboard_into("llm_pcg").await;
    let first = h.levels(&id).await;
    assert_eq!(first.source, BatchSource::MockLlm);
    assert!(in_ranges(&first));
    assert_eq!(mock.max_history_seen(), 0);

    h.complete(&id, &record(1, &first.levels[0]), 5).await;
    h.idle().await;
    let next = h.levels(&id).await;
    assert_eq!(next.source, BatchSource::MockLlm);
    assert!(next.generated_at >= first.generated_at);
    assert_eq!(mock.max_history_seen(), 1);
    let profile = h.state.store().profile(&id).unwrap().clone();
    assert_eq!(profile.history.len(), 1);
    assert_eq!(profile.history[0].user_rating, Some(5));
}

#[tokio::test]
async fn fallback_is_served_while_generation_is_in_flight() {
    let mock = Arc::new(MockLlmClient::new(MockThresholds::default()).with_delay(Duration::from_millis(400)));
    let h = harness(mock.clone());
    let id = h.onboard_into("llm_pcg").await;
    let first = h.levels(&id).await;
    assert_eq!(first.source, BatchSource::MockLlm);

    h.complete(&id, &record(1, &first.levels[0]), 2).await;
    assert!(h.state.is_generating(&id));
    let t = Instant::now();
    let fallback = h.levels(&id).await;
    let elapsed = t.elapsed();
    assert!(elapsed < Duration::from_millis(50), "fallback took {elapsed:?}");
    assert_eq!(fallback.source, BatchSource::Fallback);
    assert_eq!(fallback.levels, first.levels);

    h.idle().await;
    let fresh = h.levels(&id).await;
    assert_eq!(fresh.source, BatchSource::MockLlm);
}

/// Mock wrapper that records the most calls ever running at once.
struct Concurrency {
    inner: MockLlmClient,
    running: AtomicUsize,
    peak: AtomicUsize,
}

impl LlmClient for Concurrency {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let now = self.running.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let out = self.inner.complete(request);
        self.running.fetch_sub(1, Ordering::SeqCst);
        out
    }

    fn source(&self) -> BatchSource {
        self.inner.source()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn one_generation_in_flight_per_player_and_history_capped() {
    let client = Arc::new(Concurrency {
        inner: MockLlmClient::new(MockThresholds::default()).with_delay(Duration::from_millis(30)),
        running: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    });
    let h = harness(client.clone());
    let id = h.onboard_into("llm_pcg").await;
    let batch = h.levels(&id).await;
    for level in 1..=8 {
        let (status, _) = h.complete(&id, &record(level, &batch.levels[0]), 4).await;
        assert_eq!(status, StatusCode::OK);
    }
    h.idle().await;
    assert_eq!(client.peak.load(Ordering::SeqCst), 1);
    assert!(client.inner.calls() < 1 + 8);
    assert_eq!(client.inner.max_history_seen(), 5);
    let profile = h.state.store().profile(&id).unwrap().clone();
    assert!(profile.pending_is_fresh());
    assert_eq!(profile.pending_for_history, 8);
    let served = h.levels(&id).await;
    assert_eq!(served.source, BatchSource::MockLlm);
    assert!(in_ranges(&served));
}

#[tokio::test]
async fn malformed_completion_is_rejected_without_side_effects() {
    let h = harness(Arc::new(MockLlmClient::default()));
    let id = h.onboard_into("traditional_pcg").await;
    let batch = h.levels(&id).await;
    let before = h.state.store().events().len();
    let mut bad = record(1, &batch.levels[0]);
    bad.moves_left = bad.num_moves + 1;
    let (status, body) = h.complete(&id, &bad, 3).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["reasons"][0].as_str().unwrap().contains("moves_left"));
    let (status, body) = h.complete(&id, &record(1, &batch.levels[0]), 7).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["reasons"][0].as_str().unwrap().contains("rating"));
    assert_eq!(h.state.store().events().len(), before);
}

#[tokio::test]
async fn repeated_completion_is_acknowledged_once() {
    let h = harness(Arc::new(MockLlmClient::default()));
    let id = h.onboard_into("llm_pcg").await;
    let batch = h.levels(&id).await;
    let rec = record(1, &batch.levels[0]);
    assert_eq!(h.complete(&id, &rec, 4).await.1, json!({ "status": "recorded" }));
    assert_eq!(h.complete(&id, &rec, 4).await.1, json!({ "status": "duplicate" }));
    h.idle().await;
    let store = h.state.store();
    assert_eq!(store.profile(&id).unwrap().history.len(), 1);
    assert_eq!(store.completion_counts(pcg_core::Group::LlmPcg, false), (1, 1));
}

#[tokio::test]
async fn event_endpoint_enforces_ordering() {
    let mock = Arc::new(MockLlmClient::default());
    let h = harness(mock.clone());
    let id = h.onboard_into("llm_pcg").await;
    let batch = h.levels(&id).await;
    let post = |body: Value| {
        let uri = format!("/api/players/{id}/events");
        let h = &h;
        async move { h.call(Method::POST, &uri, Some(body)).await }
    };
    assert_eq!(post(json!({ "event": "screen_view", "name": "menu" })).await.0, StatusCode::OK);
    assert_eq!(post(json!({ "event": "rated", "level_in_row": 1, "user_rating": 3 })).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(post(json!({ "event": "started", "level_in_row": 1 })).await.1, json!({ "status": "recorded" }));
    assert_eq!(post(json!({ "event": "started", "level_in_row": 1 })).await.1, json!({ "status": "duplicate" }));
    let completed = json!({ "event": "completed", "level_in_row": 1, "record": record(1, &batch.levels[1]) });
    assert_eq!(post(completed).await.0, StatusCode::OK);
    h.idle().await;
    let calls = mock.calls();
    assert_eq!(post(json!({ "event": "rated", "level_in_row": 1, "user_rating": 3 })).await.0, StatusCode::OK);
    h.idle().await;
    assert_eq!(mock.calls(), calls + 1);
    assert_eq!(post(json!({ "event": "started", "level_in_row": 2 })).await.0, StatusCode::OK);
    assert_eq!(post(json!({ "event": "quit", "level_in_row": 2 })).await.0, StatusCode::OK);
    let created = json!({ "event": "player_created", "group": "llm_pcg" });
    assert_eq!(post(created).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let rows = h.state.store().export_dataset(&Default::default());
    assert_eq!(rows.iter().map(|r| (r.level_in_row, r.completed)).collect::<Vec<_>>(), vec![(1, true), (2, false)]);
}
