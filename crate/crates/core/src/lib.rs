//! Personalized procedural content generation for a Match-3 game.
//!
//! The crate holds everything that does not need a network listener: the
//! game engine, parameter-level generation and validation, LLM prompt
//! building and response handling, the telemetry store, and a synthetic
//! player simulator used to run A/B experiments offline.

pub mod engine;
pub mod levelgen;
pub mod personalization;
pub mod pipeline;
pub mod simulator;
pub mod telemetry;

pub use engine::{Board, LevelState, LevelStatus, Pos};
pub use levelgen::{BatchSource, LevelBatch, LevelParams, ParamRanges, Policy};
pub use personalization::{LlmClient, LlmRequest, MockLlmClient, PlayerType};
pub use pipeline::Generator;
pub use simulator::{run_experiment, Persona, SimulationConfig};
pub use telemetry::{GameplayRecord, Group, LevelRunEvent, PlayerProfile, Store};
