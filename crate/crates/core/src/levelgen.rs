//! Level parameters, the uniform-random generator, range validation and
//! board instantiation.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, Board, CollectionGoal, LevelState, Objectives};

/// One level's parameters. Field names are the wire format.
///
/// Values are signed so that malformed input (negative counts) survives
/// parsing and can be reported by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelParams {
    pub num_different_pieces: i64,
    pub score_goal: i64,
    pub board_width: i64,
    pub board_height: i64,
    pub num_moves: i64,
    pub collection_goals: Vec<i64>,
}

/// Inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: i64,
    pub max: i64,
}

impl Bounds {
    pub const fn new(min: i64, max: i64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.min..=self.max).contains(&v)
    }

    pub fn clamp(&self, v: i64) -> i64 {
        v.clamp(self.min, self.max)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        rng.random_range(self.min..=self.max)
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub num_different_pieces: Bounds,
    pub score_goal: Bounds,
    pub board_width: Bounds,
    pub board_height: Bounds,
    pub num_moves: Bounds,
    /// Number of collection goals.
    pub goal_count: Bounds,
    /// Pieces required per collection goal.
    pub goal_value: Bounds,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            num_different_pieces: Bounds::new(3, 5),
            score_goal: Bounds::new(700, 2000),
            board_width: Bounds::new(4, 6),
            board_height: Bounds::new(4, 6),
            num_moves: Bounds::new(20, 30),
            goal_count: Bounds::new(2, 4),
            goal_value: Bounds::new(5, 15),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevelError {
    #[error("invalid range for {field}: {bounds}")]
    InvalidRange { field: &'static str, bounds: Bounds },
    #[error("level parameters rejected: {0:?}")]
    Rejected(Vec<Violation>),
    #[error("could not build a playable board after {0} attempts")]
    InstantiationFailed(usize),
}

impl ParamRanges {
    pub fn check(&self) -> Result<(), LevelError> {
        let fields = [
            ("num_different_pieces", self.num_different_pieces),
            ("score_goal", self.score_goal),
            ("board_width", self.board_width),
            ("board_height", self.board_height),
            ("num_moves", self.num_moves),
            ("goal_count", self.goal_count),
            ("goal_value", self.goal_value),
        ];
        for (field, bounds) in fields {
            if bounds.min > bounds.max || bounds.min < 0 {
                return Err(LevelError::InvalidRange { field, bounds });
            }
        }
        if self.num_different_pieces.min < 1 || self.goal_count.min < 1 {
            return Err(LevelError::InvalidRange {
                field: "goal_count",
                bounds: self.goal_count,
            });
        }
        if self.num_different_pieces.max as usize > engine::MAX_COLORS {
            return Err(LevelError::InvalidRange {
                field: "num_different_pieces",
                bounds: self.num_different_pieces,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Strict,
    Clamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accepted,
    Clamped,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Field name, with an index for collection goals (`collection_goals[2]`).
    pub field: String,
    pub value: i64,
    pub bounds: Bounds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub action: Action,
    /// Set when the input was structurally unusable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malformed: Option<String>,
}

/// Draws every field independently and uniformly from its inclusive range.
///
/// The goal count is drawn uniformly from its range capped at the number of
/// piece colours.
pub fn generate_traditional<R: Rng + ?Sized>(rng: &mut R, ranges: &ParamRanges) -> LevelParams {
    let num_different_pieces = ranges.num_different_pieces.sample(rng);
    let score_goal = ranges.score_goal.sample(rng);
    let board_width = ranges.board_width.sample(rng);
    let board_height = ranges.board_height.sample(rng);
    let num_moves = ranges.num_moves.sample(rng);
    let max_goals = ranges.goal_count.max.min(num_different_pieces).max(ranges.goal_count.min);
    let goals = Bounds::new(ranges.goal_count.min, max_goals).sample(rng);
    let collection_goals = (0..goals).map(|_| ranges.goal_value.sample(rng)).collect();
    LevelParams {
        num_different_pieces,
        score_goal,
        board_width,
        board_height,
        num_moves,
        collection_goals,
    }
}

/// Checks `params` against `ranges`. Under [`Policy::Clamp`] every
/// out-of-range value is pulled to its nearest bound and the goal list is
/// truncated or padded to a legal length.
pub fn validate(
    params: &LevelParams,
    ranges: &ParamRanges,
    policy: Policy,
) -> (LevelParams, ValidationReport) {
    if let Some(reason) = malformed(params) {
        return (
            params.clone(),
            ValidationReport { violations: Vec::new(), action: Action::Rejected, malformed: Some(reason) },
        );
    }

    let mut violations = Vec::new();
    let mut check = |field: &str, value: i64, bounds: Bounds| {
        if !bounds.contains(value) {
            violations.push(Violation { field: field.to_string(), value, bounds });
        }
    };
    check("num_different_pieces", params.num_different_pieces, ranges.num_different_pieces);
    check("score_goal", params.score_goal, ranges.score_goal);
    check("board_width", params.board_width, ranges.board_width);
    check("board_height", params.board_height, ranges.board_height);
    check("num_moves", params.num_moves, ranges.num_moves);
    let count_bounds = goal_count_bounds(ranges, ranges.num_different_pieces.clamp(params.num_different_pieces));
    check("collection_goals.len", params.collection_goals.len() as i64, count_bounds);
    for (i, &g) in params.collection_goals.iter().enumerate() {
        check(&format!("collection_goals[{i}]"), g, ranges.goal_value);
    }

    if violations.is_empty() {
        let report = ValidationReport { violations, action: Action::Accepted, malformed: None };
        return (params.clone(), report);
    }
    if policy == Policy::Strict {
        let report = ValidationReport { violations, action: Action::Rejected, malformed: None };
        return (params.clone(), report);
    }

    let num_different_pieces = ranges.num_different_pieces.clamp(params.num_different_pieces);
    let count_bounds = goal_count_bounds(ranges, num_different_pieces);
    let mut collection_goals: Vec<i64> =
        params.collection_goals.iter().map(|&g| ranges.goal_value.clamp(g)).collect();
    collection_goals.truncate(count_bounds.max as usize);
    while (collection_goals.len() as i64) < count_bounds.min {
        collection_goals.push(ranges.goal_value.min);
    }
    let clamped = LevelParams {
        num_different_pieces,
        score_goal: ranges.score_goal.clamp(params.score_goal),
        board_width: ranges.board_width.clamp(params.board_width),
        board_height: ranges.board_height.clamp(params.board_height),
        num_moves: ranges.num_moves.clamp(params.num_moves),
        collection_goals,
    };
    (clamped, ValidationReport { violations, action: Action::Clamped, malformed: None })
}

/// Legal goal-list lengths once the palette size is known.
fn goal_count_bounds(ranges: &ParamRanges, pieces: i64) -> Bounds {
    let max = ranges.goal_count.max.min(pieces).max(ranges.goal_count.min);
    Bounds::new(ranges.goal_count.min, max)
}

fn malformed(params: &LevelParams) -> Option<String> {
    let scalars = [
        ("num_different_pieces", params.num_different_pieces),
        ("score_goal", params.score_goal),
        ("board_width", params.board_width),
        ("board_height", params.board_height),
        ("num_moves", params.num_moves),
    ];
    if let Some((field, v)) = scalars.iter().find(|(_, v)| *v < 0) {
        return Some(format!("{field} is negative ({v})"));
    }
    if params.collection_goals.is_empty() {
        return Some("collection_goals is empty".into());
    }
    if let Some(g) = params.collection_goals.iter().find(|&&g| g < 0) {
        return Some(format!("collection goal is negative ({g})"));
    }
    None
}

/// Convenience wrapper: `Ok` with the (possibly clamped) params unless rejected.
pub fn validated(params: &LevelParams, ranges: &ParamRanges, policy: Policy) -> Result<LevelParams, LevelError> {
    let (out, report) = validate(params, ranges, policy);
    match report.action {
        Action::Rejected => Err(LevelError::Rejected(report.violations)),
        _ => Ok(out),
    }
}

/// A freshly built board plus the colour assigned to each collection goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub board: Board,
    pub goal_colors: Vec<engine::Color>,
}

const MAX_INSTANTIATION_ATTEMPTS: usize = 1_000;

/// Builds a match-free, playable board and draws distinct goal colours.
pub fn instantiate<R: Rng + ?Sized>(params: &LevelParams, rng: &mut R) -> Result<Instance, LevelError> {
    let palette = params.num_different_pieces;
    let (w, h) = (params.board_width, params.board_height);
    let goals = params.collection_goals.len();
    if palette < 1 || palette as usize > engine::MAX_COLORS || w < 1 || h < 1 || goals > palette as usize {
        return Err(LevelError::Rejected(Vec::new()));
    }
    let palette = palette as u8;
    for _ in 0..MAX_INSTANTIATION_ATTEMPTS {
        let board = Board::random_without_matches(w as usize, h as usize, palette, rng);
        if engine::find_matches(&board).is_empty() && !engine::available_moves(&board).is_empty() {
            let goal_colors = index::sample(rng, palette as usize, goals)
                .into_iter()
                .map(|c| c as engine::Color)
                .collect();
            return Ok(Instance { board, goal_colors });
        }
    }
    Err(LevelError::InstantiationFailed(MAX_INSTANTIATION_ATTEMPTS))
}

/// Instantiates `params` into a playable [`LevelState`].
pub fn start_level<R: Rng + ?Sized>(params: &LevelParams, rng: &mut R) -> Result<LevelState, LevelError> {
    let Instance { board, goal_colors } = instantiate(params, rng)?;
    let objectives = Objectives {
        score_goal: params.score_goal.max(0) as u32,
        num_moves: params.num_moves.max(0) as u32,
        collection: goal_colors
            .iter()
            .zip(&params.collection_goals)
            .map(|(&color, &target)| CollectionGoal { color, target: target.max(0) as u32 })
            .collect(),
    };
    Ok(LevelState::new(board, params.num_different_pieces as u8, objectives))
}

/// Where a served batch came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSource {
    Llm,
    MockLlm,
    Traditional,
    /// An older batch served while a newer one is being generated.
    Fallback,
}

/// Three levels served together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBatch {
    pub levels: Vec<LevelParams>,
    pub generated_at: chrono::DateTime<chrono::Utc>,
    pub source: BatchSource,
}

pub fn generate_traditional_batch<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &ParamRanges,
    generated_at: chrono::DateTime<chrono::Utc>,
) -> LevelBatch {
    LevelBatch {
        levels: (0..3).map(|_| generate_traditional(rng, ranges)).collect(),
        generated_at,
        source: BatchSource::Traditional,
    }
}

/// Parses a JSON array of levels.
pub fn parse_batch(json: &str) -> Result<Vec<LevelParams>, serde_json::Error> {
    serde_json::from_str(json)
}

pub fn batch_to_json(levels: &[LevelParams]) -> String {
    serde_json::to_string_pretty(levels).expect("level params always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn in_range() -> LevelParams {
        LevelParams {
            num_different_pieces: 4,
            score_goal: 1200,
            board_width: 5,
            board_height: 5,
            num_moves: 25,
            collection_goals: vec![10, 12],
        }
    }

    #[test]
    fn degenerate_ranges_force_output() {
        let b = |v| Bounds::new(v, v);
        let ranges = ParamRanges {
            num_different_pieces: b(3),
            score_goal: b(700),
            board_width: b(4),
            board_height: b(4),
            num_moves: b(20),
            goal_count: b(2),
            goal_value: b(5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = generate_traditional(&mut rng, &ranges);
        assert_eq!(
            p,
            LevelParams {
                num_different_pieces: 3,
                score_goal: 700,
                board_width: 4,
                board_height: 4,
                num_moves: 20,
                collection_goals: vec![5, 5],
            }
        );
    }

    #[test]
    fn seeded_generation_repeats() {
        let ranges = ParamRanges::default();
        let a = generate_traditional(&mut ChaCha8Rng::seed_from_u64(42), &ranges);
        let b = generate_traditional(&mut ChaCha8Rng::seed_from_u64(42), &ranges);
        assert_eq!(a, b);
    }

    #[test]
    fn in_range_params_are_accepted_unchanged() {
        let p = in_range();
        for policy in [Policy::Strict, Policy::Clamp] {
            let (out, report) = validate(&p, &ParamRanges::default(), policy);
            assert_eq!(report.action, Action::Accepted);
            assert!(report.violations.is_empty());
            assert_eq!(out, p);
        }
    }

    #[test]
    fn malformed_is_rejected_under_both_policies() {
        let mut neg = in_range();
        neg.num_moves = -3;
        let mut empty = in_range();
        empty.collection_goals.clear();
        for p in [neg, empty] {
            for policy in [Policy::Strict, Policy::Clamp] {
                let (_, report) = validate(&p, &ParamRanges::default(), policy);
                assert_eq!(report.action, Action::Rejected);
                assert!(report.malformed.is_some());
            }
        }
    }

    #[test]
    fn clamp_pads_and_truncates_goal_lists() {
        let ranges = ParamRanges::default();
        let mut short = in_range();
        short.collection_goals = vec![9];
        let (out, report) = validate(&short, &ranges, Policy::Clamp);
        assert_eq!(report.action, Action::Clamped);
        assert_eq!(out.collection_goals, vec![9, 5]);

        let mut long = in_range();
        long.num_different_pieces = 3;
        long.collection_goals = vec![6, 7, 8, 9, 10];
        let (out, _) = validate(&long, &ranges, Policy::Clamp);
        assert_eq!(out.collection_goals, vec![6, 7, 8]);
    }

    #[test]
    fn goal_colours_are_a_distinct_subset() {
        let mut p = in_range();
        p.num_different_pieces = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let inst = instantiate(&p, &mut rng).unwrap();
            assert_eq!(inst.goal_colors.len(), 2);
            assert_ne!(inst.goal_colors[0], inst.goal_colors[1]);
            assert!(inst.goal_colors.iter().all(|&c| c < 3));
        }
    }

    #[test]
    fn instantiation_is_deterministic() {
        let p = in_range();
        let a = instantiate(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = instantiate(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_level_number_is_ignored() {
        let json = r#"[{"level_number": 7, "num_different_pieces": 3, "score_goal": 900,
            "board_width": 4, "board_height": 4, "num_moves": 25, "collection_goals": [5, 6]}]"#;
        let batch = parse_batch(json).unwrap();
        assert_eq!(batch[0].score_goal, 900);
    }
}
