//! Prompt construction from play history, structured-output LLM requests,
//! response parsing, and a deterministic offline stand-in for the model.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::levelgen::{self, BatchSource, LevelParams, ParamRanges, Policy, ValidationReport};
use crate::telemetry::GameplayRecord;

/// Most recent records included in a history prompt.
pub const HISTORY_LIMIT: usize = 5;
/// Levels requested per generation round.
pub const BATCH_SIZE: usize = 3;
/// Retries after the first failed attempt before giving up.
pub const DEFAULT_RETRIES: usize = 2;
/// Name of the function the model is forced to call.
pub const FUNCTION_NAME: &str = "suggest_levels";

const TASK_STEPS: &str = "\
Your task is to:
1. Consider the data on the player.
2. Consider parameters of the levels the player already completed.
3. Determine what type of player we are dealing with based on a list of player types. Mostly consider the level of skill, fun vs. complex, puzzly vs arcade.
4. Suggest the next 3 levels for this player based on the type of gamer and the list of level completion parameters.
5. Explain your reasoning for the type of gamer and next 3 levels.
";

const COLD_OPEN: &str =
    "Your task is to suggest 3 levels of a game to a player that is completely new to it and starts with level 1.\n";

const PLAYER_TYPES: &str = "Player types: not so skilled player, casual player, great player.\n";

const PARAMETER_GUIDANCE: &str = "\
Parameters:
- level_number: A number of the current level.
- num_different_pieces: More different pieces, harder the game. Valid range (3, 5).
- score_goal: The score a user must reach before completing the level. The score should be divisable by 3. Valid range (700, 2000).
- num_moves - Amount of moves a user has to complete the game. Harder levels need more moves: consider collection_goals. Usually number is (20, 30).
- board_width - How wide the board is. Wider is harder. Valid range (4, 6).
- board_height - Height of the board. Higher is harder. Should be very similar to board-width. Valid range (4, 6).
- collection_goals - To finish the level, you need to collect a certain number of pieces with a specific color.

The game involves (2, 4) unique colors, each represented by a number of pieces between (5, 15).
For instance, if the game requires two different colors, you may need to collect 10 pieces of one color and 20 pieces of another, represented as [10, 20].
";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerType {
    NotSoSkilled,
    Casual,
    Great,
}

impl PlayerType {
    pub fn label(self) -> &'static str {
        match self {
            PlayerType::NotSoSkilled => "not so skilled player",
            PlayerType::Casual => "casual player",
            PlayerType::Great => "great player",
        }
    }

    /// Lenient parse: "casual player", "Casual", "not_so_skilled" all work.
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphabetic()).collect::<String>().to_lowercase();
        let key = key.strip_suffix("player").unwrap_or(&key);
        match key {
            "notsoskilled" => Some(PlayerType::NotSoSkilled),
            "casual" => Some(PlayerType::Casual),
            "great" => Some(PlayerType::Great),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("history is empty; use the first-levels prompt")]
    EmptyHistory,
    #[error("record for level {0} has no rating")]
    Unrated(u32),
}

/// One paragraph per record, for at most the [`HISTORY_LIMIT`] most recent.
pub fn build_history_prompt(records: &[GameplayRecord]) -> Result<String, PromptError> {
    if records.is_empty() {
        return Err(PromptError::EmptyHistory);
    }
    let recent = &records[records.len().saturating_sub(HISTORY_LIMIT)..];
    let mut out = String::new();
    for (i, r) in recent.iter().enumerate() {
        let rating = r.user_rating.ok_or(PromptError::Unrated(r.level_in_row))?;
        if i > 0 {
            out.push_str("\n\n");
        }
        write!(
            out,
            "For level {}, the user scored {} where {} was the minimum to pass. \
             They had {} moves left out of {}. They made {} failed moves. \
             They made {} clicks on the board. They used {} boosters. \
             The player rated the level as {} out of 5. \
             The level contained {} different pieces. Board width x height was {} x {}.",
            r.level_in_row,
            r.score,
            r.score_goal,
            r.moves_left,
            r.num_moves,
            r.num_failed_moves,
            r.num_clicks_on_board,
            r.num_boosters_used,
            rating,
            r.level_params.num_different_pieces,
            r.level_params.board_width,
            r.level_params.board_height,
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn build_instruction_prompt() -> String {
    format!("{TASK_STEPS}\n{PLAYER_TYPES}\n{PARAMETER_GUIDANCE}")
}

pub fn build_first_levels_prompt() -> String {
    format!("{COLD_OPEN}\n{PARAMETER_GUIDANCE}")
}

/// JSON Schema for the forced function call: three levels, a player type and
/// the model's reasoning.
pub fn function_schema(ranges: &ParamRanges) -> Value {
    let int = |b: levelgen::Bounds, desc: &str| {
        json!({ "type": "integer", "minimum": b.min, "maximum": b.max, "description": desc })
    };
    json!({
        "type": "object",
        "properties": {
            "player_type": {
                "type": "string",
                "enum": [
                    PlayerType::NotSoSkilled.label(),
                    PlayerType::Casual.label(),
                    PlayerType::Great.label()
                ],
                "description": "The type of player we are dealing with."
            },
            "reasoning": {
                "type": "string",
                "description": "Reasoning for the type of gamer and the next 3 levels."
            },
            "levels": {
                "type": "array",
                "minItems": BATCH_SIZE,
                "maxItems": BATCH_SIZE,
                "items": {
                    "type": "object",
                    "properties": {
                        "level_number": { "type": "integer", "description": "A number of the level." },
                        "num_different_pieces": int(ranges.num_different_pieces, "More different pieces, harder the game."),
                        "score_goal": int(ranges.score_goal, "The score a user must reach before completing the level. Divisible by 3."),
                        "board_width": int(ranges.board_width, "How wide the board is. Wider is harder."),
                        "board_height": int(ranges.board_height, "Height of the board. Should be very similar to board_width."),
                        "num_moves": int(ranges.num_moves, "Amount of moves a user has to complete the level."),
                        "collection_goals": {
                            "type": "array",
                            "minItems": ranges.goal_count.min,
                            "maxItems": ranges.goal_count.max,
                            "items": int(ranges.goal_value, "Pieces of one colour to collect.")
                        }
                    },
                    "required": [
                        "num_different_pieces", "score_goal", "board_width",
                        "board_height", "num_moves", "collection_goals"
                    ]
                }
            }
        },
        "required": ["player_type", "reasoning", "levels"]
    })
}

/// A single stateless generation call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub instruction_text: String,
    /// Empty for the first-levels request.
    pub history_text: String,
    pub function_schema: Value,
    temperature: f32,
}

impl LlmRequest {
    pub fn for_history(records: &[GameplayRecord], ranges: &ParamRanges) -> Result<Self, PromptError> {
        Ok(Self {
            instruction_text: build_instruction_prompt(),
            history_text: build_history_prompt(records)?,
            function_schema: function_schema(ranges),
            temperature: 0.0,
        })
    }

    pub fn first_levels(ranges: &ParamRanges) -> Self {
        Self {
            instruction_text: build_first_levels_prompt(),
            history_text: String::new(),
            function_schema: function_schema(ranges),
            temperature: 0.0,
        }
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }

    pub fn is_first_levels(&self) -> bool {
        self.history_text.is_empty()
    }

    /// Number of history paragraphs carried by this request.
    pub fn history_len(&self) -> usize {
        self.history_text.matches("For level ").count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub levels: Vec<LevelParams>,
    pub player_type: PlayerType,
    pub reasoning: String,
    pub raw_response: String,
    /// One report per level, from clamping against the configured ranges.
    pub reports: Vec<ValidationReport>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("expected {BATCH_SIZE} levels, got {0}")]
    WrongLevelCount(usize),
    #[error("level {index} unusable: {reason}")]
    InvalidLevel { index: usize, reason: String },
}

#[derive(Debug, Error)]
#[error("generation failed after {attempts} attempts, fall back to traditional generation: {last}")]
pub struct FallbackRequired {
    pub attempts: usize,
    pub last: LlmError,
}

/// Anything that can answer an [`LlmRequest`] with the function-call
/// arguments as raw JSON text.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError>;

    /// How batches produced through this client are labelled.
    fn source(&self) -> BatchSource;
}

#[derive(Deserialize)]
struct WireGeneration {
    levels: Vec<LevelParams>,
    #[serde(default)]
    player_type: Option<String>,
    #[serde(default)]
    reasoning: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WireBody {
    Full(WireGeneration),
    Bare(Vec<LevelParams>),
}

/// Parses a model response. A bare level array is accepted with the player
/// type defaulting to casual.
pub fn parse_response(raw: &str, ranges: &ParamRanges) -> Result<GenerationResult, LlmError> {
    let body: WireBody = serde_json::from_str(raw).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let (levels, player_type, reasoning) = match body {
        WireBody::Full(g) => {
            let pt = match g.player_type.as_deref() {
                Some(s) => PlayerType::parse(s)
                    .ok_or_else(|| LlmError::Malformed(format!("unknown player type {s:?}")))?,
                None => PlayerType::Casual,
            };
            (g.levels, pt, g.reasoning.unwrap_or_default())
        }
        WireBody::Bare(levels) => (levels, PlayerType::Casual, String::new()),
    };
    if levels.len() != BATCH_SIZE {
        return Err(LlmError::WrongLevelCount(levels.len()));
    }
    let mut clamped = Vec::with_capacity(BATCH_SIZE);
    let mut reports = Vec::with_capacity(BATCH_SIZE);
    for (index, level) in levels.iter().enumerate() {
        let (out, report) = levelgen::validate(level, ranges, Policy::Clamp);
        if report.action == levelgen::Action::Rejected {
            let reason = report.malformed.clone().unwrap_or_else(|| "rejected".into());
            return Err(LlmError::InvalidLevel { index, reason });
        }
        clamped.push(out);
        reports.push(report);
    }
    Ok(GenerationResult { levels: clamped, player_type, reasoning, raw_response: raw.to_string(), reports })
}

/// Calls the client, retrying malformed or failed responses `retries` times.
pub fn request_levels(
    client: &dyn LlmClient,
    request: &LlmRequest,
    ranges: &ParamRanges,
    retries: usize,
) -> Result<GenerationResult, FallbackRequired> {
    let attempts = retries + 1;
    let mut last = None;
    for attempt in 1..=attempts {
        let outcome = client.complete(request).and_then(|raw| {
            tracing::debug!(attempt, raw = %raw, "model response");
            parse_response(&raw, ranges)
        });
        match outcome {
            Ok(result) => {
                tracing::info!(
                    player_type = result.player_type.label(),
                    reasoning = %result.reasoning,
                    "levels generated"
                );
                return Ok(result);
            }
            Err(e) => {
                tracing::warn!(attempt, error = %e, "generation attempt failed");
                last = Some(e);
            }
        }
    }
    Err(FallbackRequired { attempts, last: last.expect("at least one attempt") })
}

/// Classification cut-offs for [`mock_generate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockThresholds {
    /// Minimum mean share of moves left for a great player.
    pub great_skill: f64,
    /// Minimum mean rating for a great player.
    pub great_rating: f64,
    /// Below this mean share of moves left a player is not so skilled.
    pub weak_skill: f64,
    /// At or below this mean rating, combined with thin score margins, a
    /// player is not so skilled.
    pub weak_rating: f64,
    /// Mean relative score margin counted as thin.
    pub weak_margin: f64,
}

impl Default for MockThresholds {
    fn default() -> Self {
        Self { great_skill: 0.5, great_rating: 4.0, weak_skill: 0.2, weak_rating: 2.0, weak_margin: 0.25 }
    }
}

/// Summary statistics the mock classifies on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistorySummary {
    /// Mean share of moves left.
    pub skill: f64,
    pub frustration: f64,
    pub mean_rating: f64,
    /// Mean `(score - goal) / goal`.
    pub margin: f64,
}

pub fn summarize(records: &[GameplayRecord]) -> Option<HistorySummary> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&GameplayRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let skill = mean(&|r| r.moves_left as f64 / (r.num_moves.max(1)) as f64);
    let failed = mean(&|r| r.num_failed_moves as f64);
    let clicks = mean(&|r| r.num_clicks_on_board as f64);
    let rated: Vec<f64> = records.iter().filter_map(|r| r.user_rating.map(f64::from)).collect();
    let mean_rating = if rated.is_empty() { 3.0 } else { rated.iter().sum::<f64>() / rated.len() as f64 };
    let margin = mean(&|r| (r.score as f64 - r.score_goal as f64) / (r.score_goal.max(1)) as f64);
    Some(HistorySummary { skill, frustration: failed / (clicks / 10.0).max(1.0), mean_rating, margin })
}

pub fn classify(summary: &HistorySummary, t: &MockThresholds) -> PlayerType {
    if summary.skill >= t.great_skill && summary.mean_rating >= t.great_rating {
        PlayerType::Great
    } else if summary.skill < t.weak_skill || (summary.mean_rating <= t.weak_rating && summary.margin < t.weak_margin) {
        PlayerType::NotSoSkilled
    } else {
        PlayerType::Casual
    }
}

fn template(player_type: PlayerType, step: i64) -> LevelParams {
    match player_type {
        PlayerType::NotSoSkilled => LevelParams {
            num_different_pieces: 3,
            score_goal: 702 + 24 * step,
            board_width: 4,
            board_height: 4,
            num_moves: 30,
            collection_goals: vec![5, 5 + step],
        },
        PlayerType::Casual => LevelParams {
            num_different_pieces: 4,
            score_goal: 900 + 60 * step,
            board_width: 5,
            board_height: 5,
            num_moves: 27 - step,
            collection_goals: vec![7 + step, 7 + step],
        },
        PlayerType::Great => LevelParams {
            num_different_pieces: 5,
            score_goal: 1500 + 150 * step,
            board_width: 6,
            board_height: 6,
            num_moves: 24 - step,
            collection_goals: vec![10 + step, 10 + step, 12],
        },
    }
}

/// Deterministic stand-in for the model: classifies the history and emits
/// three levels from a per-type template with mild progression.
pub fn mock_generate(records: &[GameplayRecord], thresholds: &MockThresholds) -> GenerationResult {
    let (player_type, reasoning) = match summarize(records) {
        None => (PlayerType::Casual, "No gameplay data yet; starting with mid-range levels.".to_string()),
        Some(s) => {
            let pt = classify(&s, thresholds);
            let why = format!(
                "Mean share of moves left {:.2}, mean rating {:.2}, failed-move ratio {:.2}, score margin {:.2}.",
                s.skill, s.mean_rating, s.frustration, s.margin
            );
            (pt, why)
        }
    };
    let levels: Vec<LevelParams> = (0..BATCH_SIZE as i64).map(|i| template(player_type, i)).collect();
    let raw = json!({
        "player_type": player_type.label(),
        "reasoning": reasoning,
        "levels": levels,
    })
    .to_string();
    let reports = levels
        .iter()
        .map(|l| levelgen::validate(l, &ParamRanges::default(), Policy::Clamp).1)
        .collect();
    GenerationResult { levels, player_type, reasoning, raw_response: raw, reports }
}

/// Recovers gameplay records from a history prompt. Only fields the prompt
/// carries are filled; collection goals are left empty.
pub fn parse_history_prompt(text: &str) -> Vec<GameplayRecord> {
    let re = history_regex();
    re.captures_iter(text)
        .map(|c| {
            let n = |i: usize| c[i].parse::<i64>().unwrap_or(0);
            let params = LevelParams {
                num_different_pieces: n(10),
                score_goal: n(3),
                board_width: n(11),
                board_height: n(12),
                num_moves: n(5),
                collection_goals: Vec::new(),
            };
            GameplayRecord {
                level_in_row: n(1) as u32,
                score: n(2) as u32,
                score_goal: n(3) as u32,
                moves_left: n(4) as u32,
                num_moves: n(5) as u32,
                num_failed_moves: n(6) as u32,
                num_clicks_on_board: n(7) as u32,
                num_boosters_used: n(8) as u32,
                user_rating: Some(n(9) as u8),
                level_params: params,
            }
        })
        .collect()
}

fn history_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"For level (\d+), the user scored (\d+) where (\d+) was the minimum to pass\. They had (\d+) moves left out of (\d+)\. They made (\d+) failed moves\. They made (\d+) clicks on the board\. They used (\d+) boosters\. The player rated the level as (\d+) out of 5\. The level contained (\d+) different pieces\. Board width x height was (\d+) x (\d+)\.",
        )
        .expect("static regex")
    })
}

/// Offline client: reads the history back out of the prompt and answers
/// with [`mock_generate`]. Optionally sleeps to imitate model latency.
#[derive(Debug, Default)]
pub struct MockLlmClient {
    pub thresholds: MockThresholds,
    pub delay: Option<Duration>,
    calls: AtomicUsize,
    max_history_seen: AtomicUsize,
}

impl MockLlmClient {
    pub fn new(thresholds: MockThresholds) -> Self {
        Self { thresholds, ..Self::default() }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Largest number of history paragraphs seen in any request.
    pub fn max_history_seen(&self) -> usize {
        self.max_history_seen.load(Ordering::SeqCst)
    }
}

impl LlmClient for MockLlmClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.max_history_seen.fetch_max(request.history_len(), Ordering::SeqCst);
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let records = parse_history_prompt(&request.history_text);
        Ok(mock_generate(&records, &self.thresholds).raw_response)
    }

    fn source(&self) -> BatchSource {
        BatchSource::MockLlm
    }
}

/// Replays canned responses in order, repeating the last one. Handy for
/// exercising the retry and fallback paths.
#[derive(Debug)]
pub struct CannedClient {
    responses: Vec<Result<String, String>>,
    at: AtomicUsize,
}

impl CannedClient {
    pub fn new(responses: Vec<Result<String, String>>) -> Self {
        assert!(!responses.is_empty());
        Self { responses, at: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.at.load(Ordering::SeqCst)
    }
}

impl LlmClient for CannedClient {
    fn complete(&self, _request: &LlmRequest) -> Result<String, LlmError> {
        let i = self.at.fetch_add(1, Ordering::SeqCst).min(self.responses.len() - 1);
        self.responses[i].clone().map_err(LlmError::Transport)
    }

    fn source(&self) -> BatchSource {
        BatchSource::Llm
    }
}

/// Connection settings for a chat-completion endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

/// Blocking client for OpenAI-style chat completions with tool calling.
pub struct LiveLlmClient {
    config: LiveConfig,
    http: reqwest::blocking::Client,
}

impl LiveLlmClient {
    pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self { config, http })
    }

    /// Request body sent to the endpoint.
    pub fn request_body(&self, request: &LlmRequest) -> Value {
        let mut messages = vec![json!({ "role": "system", "content": request.instruction_text })];
        if !request.history_text.is_empty() {
            messages.push(json!({ "role": "user", "content": request.history_text }));
        }
        json!({
            "model": self.config.model,
            "temperature": request.temperature(),
            "messages": messages,
            "tools": [{
                "type": "function",
                "function": {
                    "name": FUNCTION_NAME,
                    "description": "Suggest the next 3 levels for this player.",
                    "parameters": request.function_schema,
                }
            }],
            "tool_choice": { "type": "function", "function": { "name": FUNCTION_NAME } }
        })
    }
}

/// Pulls the function-call arguments out of a chat-completion response.
pub fn extract_arguments(body: &Value) -> Result<String, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Malformed("response has no choices[0].message".into()))?;
    let args = message
        .pointer("/tool_calls/0/function/arguments")
        .or_else(|| message.pointer("/function_call/arguments"))
        .or_else(|| message.get("content"));
    match args {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(v @ Value::Object(_)) => Ok(v.to_string()),
        _ => Err(LlmError::Malformed("no function-call arguments in response".into())),
    }
}

impl LlmClient for LiveLlmClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let mut call = self.http.post(&self.config.endpoint).json(&self.request_body(request));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        extract_arguments(&body)
    }

    fn source(&self) -> BatchSource {
        BatchSource::Llm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn player_type_parsing_is_lenient() {
        assert_eq!(PlayerType::parse("casual player"), Some(PlayerType::Casual));
        assert_eq!(PlayerType::parse("Not so skilled player"), Some(PlayerType::NotSoSkilled));
        assert_eq!(PlayerType::parse("not_so_skilled"), Some(PlayerType::NotSoSkilled));
        assert_eq!(PlayerType::parse("GREAT"), Some(PlayerType::Great));
        assert_eq!(PlayerType::parse("wizard"), None);
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(matches!(build_history_prompt(&[]), Err(PromptError::EmptyHistory)));
    }

    #[test]
    fn temperature_is_pinned_to_zero() {
        let r = LlmRequest::first_levels(&ParamRanges::default());
        assert_eq!(r.temperature(), 0.0);
        assert!(r.is_first_levels());
        assert_eq!(r.history_len(), 0);
    }

    #[test]
    fn mock_templates_stay_in_range() {
        for pt in [PlayerType::NotSoSkilled, PlayerType::Casual, PlayerType::Great] {
            for step in 0..3 {
                let l = template(pt, step);
                let (_, report) = levelgen::validate(&l, &ParamRanges::default(), Policy::Strict);
                assert_eq!(report.action, levelgen::Action::Accepted, "{pt:?} step {step}");
                assert_eq!(l.score_goal % 3, 0);
            }
        }
    }

    #[test]
    fn extract_arguments_variants() {
        let tool = json!({"choices": [{"message": {"tool_calls": [{"function": {"name": "x", "arguments": "{\"a\":1}"}}]}}]});
        assert_eq!(extract_arguments(&tool).unwrap(), "{\"a\":1}");
        let legacy = json!({"choices": [{"message": {"function_call": {"arguments": "{}"}}}]});
        assert_eq!(extract_arguments(&legacy).unwrap(), "{}");
        assert!(extract_arguments(&json!({"choices": []})).is_err());
    }
}
