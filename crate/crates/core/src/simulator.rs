//! Synthetic players that play generated levels through the engine, and the
//! desk-scale A/B experiment built on them.
//!
//! The behavioural model is deliberately simple: a skill-weighted greedy
//! move policy, frustration-driven quitting, and ratings driven by the
//! distance between experienced and preferred difficulty. Every constant
//! lives in [`Behavior`] so experiments pin seeds, not theory.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, LevelState, LevelStatus, MoveKind, Pos};
use crate::levelgen::{self, BatchSource, LevelBatch, LevelParams, ParamRanges};
use crate::personalization::{LiveConfig, LiveLlmClient, LlmClient, MockLlmClient, MockThresholds};
use crate::pipeline::{self, Generator};
use crate::telemetry::{Clock, EventKind, GameplayRecord, Group, LevelRunEvent, LogicalClock, Store, TelemetryError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    /// Probability of picking the best productive swap on a move.
    pub skill: f64,
    /// Resistance to quitting.
    pub patience: f64,
    /// Preferred difficulty on the same 0..1 scale as [`difficulty`].
    pub difficulty_preference: f64,
    /// Chance of reaching for a booster when stuck.
    pub booster_propensity: f64,
}

impl Persona {
    pub fn is_valid(&self) -> bool {
        [self.skill, self.patience, self.difficulty_preference, self.booster_propensity]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }
}

/// Uniform sampling bounds for each persona trait.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonaDistribution {
    pub skill: (f64, f64),
    pub patience: (f64, f64),
    pub difficulty_preference: (f64, f64),
    pub booster_propensity: (f64, f64),
}

impl Default for PersonaDistribution {
    fn default() -> Self {
        Self { skill: (0.0, 1.0), patience: (0.0, 1.0), difficulty_preference: (0.0, 1.0), booster_propensity: (0.0, 1.0) }
    }
}

impl PersonaDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Persona {
        let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Persona {
            skill: draw(self.skill),
            patience: draw(self.patience),
            difficulty_preference: draw(self.difficulty_preference),
            booster_propensity: draw(self.booster_propensity),
        }
    }
}

/// Tunable constants of the behavioural model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Behavior {
    /// Frustration added per consecutive reverted swap.
    pub revert_frustration: f64,
    /// Scales `(1 - patience) * frustration` into a per-move quit chance.
    pub quit_scale: f64,
    /// Lag of progress behind moves spent that counts as stalled.
    pub stall_gap: f64,
    /// Chance the noise term is zero; the rest splits evenly over -1 and +1.
    pub rating_noise_zero: f64,
    /// Chance of leaving the game for good after a quit, scaled by impatience.
    pub leave_after_quit: f64,
    pub leave_after_fail: f64,
    pub leave_after_complete: f64,
}

impl Default for Behavior {
    fn default() -> Self {
        Self {
            revert_frustration: 0.15,
            quit_scale: 0.25,
            stall_gap: 0.2,
            rating_noise_zero: 0.6,
            leave_after_quit: 0.6,
            leave_after_fail: 0.35,
            leave_after_complete: 0.12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Failed,
    Quit,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("only completed runs can be rated")]
    NotCompleted,
    #[error(transparent)]
    Level(#[from] levelgen::LevelError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn progress_fraction(state: &LevelState) -> f64 {
    let score = (state.score as f64 / state.objectives.score_goal.max(1) as f64).min(1.0);
    let goals = &state.objectives.collection;
    if goals.is_empty() {
        return score;
    }
    let collected = goals
        .iter()
        .zip(&state.collection_progress)
        .map(|(g, &got)| (got as f64 / g.target.max(1) as f64).min(1.0))
        .sum::<f64>()
        / goals.len() as f64;
    score.min(collected)
}

fn moves_used_fraction(state: &LevelState) -> f64 {
    1.0 - state.moves_left as f64 / state.objectives.num_moves.max(1) as f64
}

/// Ranks productive swaps by pieces cleared, counting unmet goal colours double.
fn best_move(state: &LevelState) -> Option<(Pos, Pos)> {
    let open: Vec<engine::Color> = state
        .objectives
        .collection
        .iter()
        .zip(&state.collection_progress)
        .filter(|(g, &got)| got < g.target)
        .map(|(g, _)| g.color)
        .collect();
    engine::available_moves(&state.board).into_iter().max_by_key(|&(a, b)| {
        let total = engine::immediate_clear(&state.board, a, b);
        let goal_bonus = [a, b]
            .iter()
            .filter(|p| open.contains(&state.board.get(**p)))
            .count();
        total * 2 + goal_bonus
    })
}

/// Cell whose 3x3 neighbourhood holds the most unmet goal-colour pieces.
fn best_booster_cell(state: &LevelState) -> Pos {
    let open: Vec<engine::Color> = state
        .objectives
        .collection
        .iter()
        .zip(&state.collection_progress)
        .filter(|(g, &got)| got < g.target)
        .map(|(g, _)| g.color)
        .collect();
    let board = &state.board;
    board
        .positions()
        .max_by_key(|p| {
            let mut n = 0;
            for r in p.row.saturating_sub(1)..=(p.row + 1).min(board.height() - 1) {
                for c in p.col.saturating_sub(1)..=(p.col + 1).min(board.width() - 1) {
                    if open.contains(&board.get(Pos::new(r, c))) {
                        n += 1;
                    }
                }
            }
            (n, std::cmp::Reverse(*p))
        })
        .unwrap_or(Pos::new(0, 0))
}

fn random_adjacent<R: Rng + ?Sized>(state: &LevelState, rng: &mut R) -> (Pos, Pos) {
    let (w, h) = (state.board.width(), state.board.height());
    let pairs = 2 * w * h - w - h;
    state.board.adjacent_pairs().nth(rng.random_range(0..pairs)).expect("index within pair count")
}

/// Plays one level to completion, failure, or a quit.
///
/// `level_in_row` is copied into the record; the rating is left empty.
pub fn play_level<R: Rng + ?Sized>(
    persona: &Persona,
    params: &LevelParams,
    level_in_row: u32,
    behavior: &Behavior,
    rng: &mut R,
) -> Result<(Outcome, GameplayRecord), SimError> {
    let mut state = levelgen::start_level(params, rng)?;
    let mut consecutive_reverts = 0u32;
    let max_steps = 20 * state.objectives.num_moves as usize + 200;
    let mut outcome = Outcome::Quit;
    for _ in 0..max_steps {
        match state.status() {
            LevelStatus::Completed => {
                outcome = Outcome::Completed;
                break;
            }
            LevelStatus::Failed => {
                outcome = Outcome::Failed;
                break;
            }
            LevelStatus::InProgress => {}
        }
        let deficit = (moves_used_fraction(&state) - progress_fraction(&state)).max(0.0);
        let frustration = (behavior.revert_frustration * consecutive_reverts as f64 + deficit).min(1.0);
        if rng.random_bool(((1.0 - persona.patience) * frustration * behavior.quit_scale).clamp(0.0, 1.0)) {
            outcome = Outcome::Quit;
            break;
        }
        if deficit > behavior.stall_gap
            && state.boosters_used < state.booster_budget
            && rng.random_bool(persona.booster_propensity)
        {
            let cell = best_booster_cell(&state);
            state = state.use_booster(cell, rng).expect("in-bounds cell within budget").0;
            continue;
        }
        let (a, b) = if rng.random_bool(persona.skill) {
            best_move(&state).unwrap_or_else(|| random_adjacent(&state, rng))
        } else {
            random_adjacent(&state, rng)
        };
        let (next, out) = state.apply_move(a, b, rng).expect("adjacent in-bounds swap on a live level");
        consecutive_reverts = match out.kind {
            MoveKind::Reverted => consecutive_reverts + 1,
            _ => 0,
        };
        state = next;
    }
    if outcome == Outcome::Quit && state.status() == LevelStatus::Completed {
        outcome = Outcome::Completed;
    }
    let record = GameplayRecord {
        level_in_row,
        score: state.score,
        score_goal: state.objectives.score_goal,
        moves_left: state.moves_left,
        num_moves: state.objectives.num_moves,
        num_failed_moves: state.failed_moves,
        num_clicks_on_board: state.clicks,
        num_boosters_used: state.boosters_used,
        user_rating: None,
        level_params: params.clone(),
    };
    Ok((outcome, record))
}

/// Experienced difficulty in 0..1: how close the score came to the goal,
/// blended with how much of the move budget was spent.
pub fn difficulty(params: &LevelParams, record: &GameplayRecord) -> f64 {
    let goal = params.score_goal.max(1) as f64;
    let tightness = (goal / (record.score.max(1) as f64)).min(1.0);
    let pressure = 1.0 - record.moves_left as f64 / record.num_moves.max(1) as f64;
    0.5 * tightness + 0.5 * pressure
}

/// `round(5 - 4 |difficulty - preference|) + noise`, clamped to 1..=5.
pub fn rating_with_noise(persona: &Persona, difficulty: f64, noise: i32) -> u8 {
    let base = (5.0 - 4.0 * (difficulty - persona.difficulty_preference).abs()).round() as i32;
    (base + noise).clamp(1, 5) as u8
}

pub fn rate_level<R: Rng + ?Sized>(
    persona: &Persona,
    params: &LevelParams,
    record: &GameplayRecord,
    outcome: Outcome,
    behavior: &Behavior,
    rng: &mut R,
) -> Result<u8, SimError> {
    if outcome != Outcome::Completed {
        return Err(SimError::NotCompleted);
    }
    let noise = if rng.random_bool(behavior.rating_noise_zero) {
        0
    } else if rng.random_bool(0.5) {
        -1
    } else {
        1
    };
    Ok(rating_with_noise(persona, difficulty(params, record), noise))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeneratorWiring {
    /// Offline stand-in for the model.
    Mock {
        #[serde(default)]
        thresholds: MockThresholds,
    },
    Live(LiveConfig),
    /// Both groups receive uniform-random levels.
    TraditionalOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_players: usize,
    pub seed: u64,
    pub max_levels_per_player: u32,
    pub personas: PersonaDistribution,
    pub behavior: Behavior,
    pub generator: GeneratorWiring,
    pub ranges: ParamRanges,
    pub retries: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_players: 102,
            seed: 7,
            max_levels_per_player: 25,
            personas: PersonaDistribution::default(),
            behavior: Behavior::default(),
            generator: GeneratorWiring::Mock { thresholds: MockThresholds::default() },
            ranges: ParamRanges::default(),
            retries: crate::personalization::DEFAULT_RETRIES,
        }
    }
}

/// Counters kept alongside the log for cross-checking exports.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub players: usize,
    pub started: u64,
    pub completed: u64,
    pub failed: u64,
    pub quit: u64,
    pub batches: u64,
    pub llm_batches: u64,
    /// Most history paragraphs any generation request carried.
    pub max_history_in_request: usize,
}

/// Runs the experiment into `store`, which may be in memory or file backed.
pub fn run_experiment(config: &SimulationConfig, store: &mut Store) -> Result<SimulationSummary, SimError> {
    if config.n_players == 0 {
        return Err(SimError::Config("n_players must be at least 1".into()));
    }
    config.ranges.check()?;
    let client: Arc<dyn LlmClient> = match &config.generator {
        GeneratorWiring::Mock { thresholds } => Arc::new(MockLlmClient::new(*thresholds)),
        GeneratorWiring::Live(live) => Arc::new(
            LiveLlmClient::new(live.clone()).map_err(|e| SimError::Config(e.to_string()))?,
        ),
        GeneratorWiring::TraditionalOnly => Arc::new(MockLlmClient::default()),
    };
    let generator = Generator { client, ranges: config.ranges, retries: config.retries };
    let clock = LogicalClock::default_epoch();
    let mut summary = SimulationSummary { players: config.n_players, ..Default::default() };

    for index in 0..config.n_players {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64);
        let persona = config.personas.sample(&mut rng);
        let player_id = format!("sim-{}-{:04}", config.seed, index + 1);
        simulate_player(config, &generator, &clock, store, &player_id, &persona, &mut rng, &mut summary)?;
    }
    store.flush()?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn simulate_player(
    config: &SimulationConfig,
    generator: &Generator,
    clock: &LogicalClock,
    store: &mut Store,
    player_id: &str,
    persona: &Persona,
    rng: &mut ChaCha8Rng,
    summary: &mut SimulationSummary,
) -> Result<(), SimError> {
    let group = store.assign_group(player_id, clock.now())?;
    let traditional = group == Group::TraditionalPcg || config.generator == GeneratorWiring::TraditionalOnly;
    // Unfinished levels since the last fresh batch; selects which level to play next.
    let mut cursor = 0usize;

    for level_in_row in 1..=config.max_levels_per_player {
        let profile = store.profile(player_id).expect("player was just created").clone();
        let batch: LevelBatch = if traditional || !profile.pending_is_fresh() {
            let batch = if traditional {
                generator.traditional(rng, clock.now())
            } else {
                let request = generator.request_for(&profile);
                summary.max_history_in_request = summary.max_history_in_request.max(request.history_len());
                generator.generate(&request, rng, clock.now())
            };
            pipeline::record_batch(store, player_id, &batch, profile.rated_count())?;
            summary.batches += 1;
            if pipeline::is_llm_source(batch.source) {
                summary.llm_batches += 1;
            }
            cursor = 0;
            batch
        } else {
            profile.pending_levels.clone().expect("fresh pending batch")
        };
        store.mark_served(player_id, &batch);
        let params = batch.levels[cursor.min(batch.levels.len() - 1)].clone();

        log(store, clock, player_id, level_in_row, EventKind::Started)?;
        summary.started += 1;
        let (outcome, record) = play_level(persona, &params, level_in_row, &config.behavior, rng)?;
        let leave_chance = match outcome {
            Outcome::Completed => {
                summary.completed += 1;
                let rating = rate_level(persona, &params, &record, outcome, &config.behavior, rng)?;
                log(store, clock, player_id, level_in_row, EventKind::Completed { record })?;
                log(store, clock, player_id, level_in_row, EventKind::Rated { user_rating: rating })?;
                if !traditional {
                    let profile = store.profile(player_id).expect("known player").clone();
                    let request = generator.request_for(&profile);
                    summary.max_history_in_request = summary.max_history_in_request.max(request.history_len());
                    let fresh = generator.generate(&request, rng, clock.now());
                    pipeline::record_batch(store, player_id, &fresh, profile.rated_count())?;
                    summary.batches += 1;
                    if pipeline::is_llm_source(fresh.source) {
                        summary.llm_batches += 1;
                    }
                }
                cursor = 0;
                config.behavior.leave_after_complete
            }
            Outcome::Failed => {
                summary.failed += 1;
                log(store, clock, player_id, level_in_row, EventKind::Failed { record })?;
                cursor += 1;
                config.behavior.leave_after_fail
            }
            Outcome::Quit => {
                summary.quit += 1;
                log(store, clock, player_id, level_in_row, EventKind::Quit { record: Some(record) })?;
                cursor += 1;
                config.behavior.leave_after_quit
            }
        };
        let leave = (leave_chance * (1.0 - persona.patience) + 0.02).clamp(0.0, 1.0);
        if rng.random_bool(leave) {
            break;
        }
    }
    Ok(())
}

fn log(
    store: &mut Store,
    clock: &LogicalClock,
    player_id: &str,
    level_in_row: u32,
    kind: EventKind,
) -> Result<(), SimError> {
    store.record_event(LevelRunEvent { timestamp: clock.now(), player_id: player_id.to_string(), level_in_row, kind })?;
    Ok(())
}

/// Whether a batch source counts as personalized.
pub fn personalized(source: BatchSource) -> bool {
    pipeline::is_llm_source(source)
}
