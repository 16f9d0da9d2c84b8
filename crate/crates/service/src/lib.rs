//! HTTP service and command-line plumbing around the level pipeline.

use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use pcg_core::levelgen::BatchSource;
use pcg_core::personalization::{LiveLlmClient, LlmClient, LlmError, LlmRequest, MockLlmClient};
use pcg_core::simulator::GeneratorWiring;
use pcg_core::{Generator, Store};

pub mod analysis;
pub mod api;
pub mod config;

pub use api::{router, AppState};
pub use config::{AnalysisConfig, ServiceConfig};

/// Client for the traditional-only wiring: every request fails, so the
/// generator always falls back to uniform-random levels.
pub struct NoModel;

impl LlmClient for NoModel {
    fn complete(&self, _request: &LlmRequest) -> Result<String, LlmError> {
        Err(LlmError::Transport("no model configured".into()))
    }

    fn source(&self) -> BatchSource {
        BatchSource::Traditional
    }
}

pub fn build_generator(config: &ServiceConfig) -> Result<Generator> {
    let (client, retries): (Arc<dyn LlmClient>, usize) = match &config.generator {
        GeneratorWiring::Mock { thresholds } => (Arc::new(MockLlmClient::new(*thresholds)), config.retries),
        GeneratorWiring::Live(live) => {
            (Arc::new(LiveLlmClient::new(live.clone()).context("building the LLM client")?), config.retries)
        }
        GeneratorWiring::TraditionalOnly => (Arc::new(NoModel), 0),
    };
    Ok(Generator { client, ranges: config.ranges, retries })
}

fn cold_open_wait(config: &ServiceConfig) -> Duration {
    match &config.generator {
        GeneratorWiring::Live(live) => Duration::from_secs(live.timeout_secs * (config.retries as u64 + 1) + 5),
        _ => Duration::from_secs(30),
    }
}

pub fn build_state(config: &ServiceConfig) -> Result<Arc<AppState>> {
    let store = Store::open(&config.data_dir)
        .with_context(|| format!("opening the event store in {}", config.data_dir.display()))?;
    let state = AppState::new(store, build_generator(config)?, config.seed).with_cold_open_wait(cold_open_wait(config));
    Ok(Arc::new(state))
}

/// Runs the API until interrupted, then writes a profile snapshot.
pub async fn serve(config: &ServiceConfig) -> Result<()> {
    let state = build_state(config)?;
    let listener =
        tokio::net::TcpListener::bind(&config.bind).await.with_context(|| format!("binding {}", config.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::clone(&state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    state.wait_idle(Duration::from_secs(10)).await;
    state.store().compact()?;
    Ok(())
}
