//! Level-batch generation shared by the simulator and the HTTP service:
//! personalized generation with traditional fallback, and the bookkeeping
//! that records each generated batch.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::Rng;

use crate::levelgen::{self, BatchSource, LevelBatch, ParamRanges};
use crate::personalization::{self, LlmClient, LlmRequest, DEFAULT_RETRIES};
use crate::telemetry::{Ack, EventKind, Group, LevelRunEvent, PlayerProfile, Store, TelemetryError};

#[derive(Clone)]
pub struct Generator {
    pub client: Arc<dyn LlmClient>,
    pub ranges: ParamRanges,
    pub retries: usize,
}

impl Generator {
    pub fn new(client: Arc<dyn LlmClient>, ranges: ParamRanges) -> Self {
        Self { client, ranges, retries: DEFAULT_RETRIES }
    }

    /// First-levels request for a player without rated history, otherwise a
    /// history request over the most recent rated runs.
    pub fn request_for(&self, profile: &PlayerProfile) -> LlmRequest {
        let history = profile.rated_history();
        if history.is_empty() {
            LlmRequest::first_levels(&self.ranges)
        } else {
            LlmRequest::for_history(&history, &self.ranges).expect("rated history is non-empty")
        }
    }

    /// Asks the model; on failure falls back to uniform-random levels.
    pub fn generate<R: Rng + ?Sized>(&self, request: &LlmRequest, rng: &mut R, now: DateTime<Utc>) -> LevelBatch {
        match personalization::request_levels(self.client.as_ref(), request, &self.ranges, self.retries) {
            Ok(result) => LevelBatch { levels: result.levels, generated_at: now, source: self.client.source() },
            Err(e) => {
                tracing::warn!(error = %e, "personalized generation failed; using traditional levels");
                levelgen::generate_traditional_batch(rng, &self.ranges, now)
            }
        }
    }

    pub fn traditional<R: Rng + ?Sized>(&self, rng: &mut R, now: DateTime<Utc>) -> LevelBatch {
        levelgen::generate_traditional_batch(rng, &self.ranges, now)
    }

    /// Generates a batch the way the player's group requires.
    pub fn generate_for<R: Rng + ?Sized>(&self, profile: &PlayerProfile, rng: &mut R, now: DateTime<Utc>) -> LevelBatch {
        match profile.group {
            Group::TraditionalPcg => self.traditional(rng, now),
            Group::LlmPcg => self.generate(&self.request_for(profile), rng, now),
        }
    }
}

/// Logs a generated batch; the store makes it the player's pending batch.
pub fn record_batch(
    store: &mut Store,
    player_id: &str,
    batch: &LevelBatch,
    history_len: usize,
) -> Result<Ack, TelemetryError> {
    store.record_event(LevelRunEvent {
        timestamp: batch.generated_at,
        player_id: player_id.to_string(),
        level_in_row: 0,
        kind: EventKind::BatchGenerated { source: batch.source, levels: batch.levels.clone(), history_len },
    })
}

pub fn is_llm_source(source: BatchSource) -> bool {
    matches!(source, BatchSource::Llm | BatchSource::MockLlm)
}
