use std::collections::{BTreeMap, BTreeSet};

use pcg_core::engine::{available_moves, find_matches};
use pcg_core::levelgen::{
    batch_to_json, generate_traditional, instantiate, parse_batch, validate, Action, Bounds, LevelParams, ParamRanges,
    Policy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const OVERSIZED_BATCH: &str = r#"[
  {
    "num_different_pieces": 4,
    "score_goal": 1500,
    "board_width": 6,
    "board_height": 6,
    "num_moves": 30,
    "collection_goals": [
      20,
      25,
      30
    ]
  },
  {
    "num_different_pieces": 5,
    "score_goal": 1800,
    "board_width": 6,
    "board_height": 6,
    "num_moves": 35,
    "collection_goals": [
      25,
      30,
      35
    ]
  },
  {
    "num_different_pieces": 5,
    "score_goal": 2000,
    "board_width": 6,
    "board_height": 6,
    "num_moves": 40,
    "collection_goals": [
      30,
      35,
      40
    ]
  }
]"#;

fn satisfies_invariants(p: &LevelParams, r: &ParamRanges) -> bool {
    r.num_different_pieces.contains(p.num_different_pieces)
        && r.score_goal.contains(p.score_goal)
        && r.board_width.contains(p.board_width)
        && r.board_height.contains(p.board_height)
        && r.num_moves.contains(p.num_moves)
        && r.goal_count.contains(p.collection_goals.len() as i64)
        && p.collection_goals.len() as i64 <= p.num_different_pieces
        && p.collection_goals.iter().all(|&g| r.goal_value.contains(g))
}

fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn uniform_p(values: &[i64], bounds: Bounds, bins: usize) -> f64 {
    let width = (bounds.max - bounds.min + 1) as f64 / bins as f64;
    let mut observed = vec![0u64; bins];
    for &v in values {
        let b = (((v - bounds.min) as f64) / width).floor() as usize;
        observed[b.min(bins - 1)] += 1;
    }
    let mut expected = vec![0.0; bins];
    for v in bounds.min..=bounds.max {
        let b = ((((v - bounds.min) as f64) / width).floor() as usize).min(bins - 1);
        expected[b] += values.len() as f64 / (bounds.max - bounds.min + 1) as f64;
    }
    chi_square_p(&observed, &expected)
}

#[test]
fn ten_thousand_draws_stay_in_bounds_and_hit_every_bound() {
    let ranges = ParamRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<LevelParams> = (0..10_000).map(|_| generate_traditional(&mut rng, &ranges)).collect();
    assert!(draws.iter().all(|p| satisfies_invariants(p, &ranges)));
    for p in &draws {
        let (_, report) = validate(p, &ranges, Policy::Strict);
        assert_eq!(report.action, Action::Accepted);
    }
    let fields: [(&str, Bounds, Box<dyn Fn(&LevelParams) -> Vec<i64>>); 7] = [
        ("pieces", ranges.num_different_pieces, Box::new(|p| vec![p.num_different_pieces])),
        ("score", ranges.score_goal, Box::new(|p| vec![p.score_goal])),
        ("width", ranges.board_width, Box::new(|p| vec![p.board_width])),
        ("height", ranges.board_height, Box::new(|p| vec![p.board_height])),
        ("moves", ranges.num_moves, Box::new(|p| vec![p.num_moves])),
        ("goal count", ranges.goal_count, Box::new(|p| vec![p.collection_goals.len() as i64])),
        ("goal value", ranges.goal_value, Box::new(|p| p.collection_goals.clone())),
    ];
    for (name, bounds, get) in &fields {
        let seen: BTreeSet<i64> = draws.iter().flat_map(|p| get(p)).collect();
        assert!(seen.contains(&bounds.min), "{name} never hit {}", bounds.min);
        assert!(seen.contains(&bounds.max), "{name} never hit {}", bounds.max);
    }
}

#[test]
fn draws_are_uniform_per_field() {
    let ranges = ParamRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws: Vec<LevelParams> = (0..10_000).map(|_| generate_traditional(&mut rng, &ranges)).collect();
    let col = |f: fn(&LevelParams) -> i64| draws.iter().map(f).collect::<Vec<_>>();
    let checks = [
        ("pieces", uniform_p(&col(|p| p.num_different_pieces), ranges.num_different_pieces, 3)),
        ("score", uniform_p(&col(|p| p.score_goal), ranges.score_goal, 13)),
        ("width", uniform_p(&col(|p| p.board_width), ranges.board_width, 3)),
        ("height", uniform_p(&col(|p| p.board_height), ranges.board_height, 3)),
        ("moves", uniform_p(&col(|p| p.num_moves), ranges.num_moves, 11)),
        (
            "goal value",
            uniform_p(&draws.iter().flat_map(|p| p.collection_goals.clone()).collect::<Vec<_>>(), ranges.goal_value, 11),
        ),
    ];
    for (name, p) in checks {
        assert!(p > 0.001, "{name}: chi-square p = {p}");
    }
    // Goal count is uniform over the legal lengths for each palette size.
    let mut by_pieces: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for p in &draws {
        by_pieces.entry(p.num_different_pieces).or_default().push(p.collection_goals.len() as i64);
    }
    for (pieces, counts) in by_pieces {
        let bounds = Bounds::new(2, pieces.min(4));
        let p = uniform_p(&counts, bounds, (bounds.max - bounds.min + 1) as usize);
        assert!(p > 0.001, "goal count with {pieces} pieces: p = {p}");
    }
}

#[test]
fn seed_42_is_repeatable() {
    let ranges = ParamRanges::default();
    let a = generate_traditional(&mut ChaCha8Rng::seed_from_u64(42), &ranges);
    let b = generate_traditional(&mut ChaCha8Rng::seed_from_u64(42), &ranges);
    assert_eq!(a, b);
}

#[test]
fn oversized_batch_parses_and_round_trips() {
    let levels = parse_batch(OVERSIZED_BATCH).unwrap();
    assert_eq!(levels.len(), 3);
    let expected = [
        (4, 1500, 6, 6, 30, vec![20, 25, 30]),
        (5, 1800, 6, 6, 35, vec![25, 30, 35]),
        (5, 2000, 6, 6, 40, vec![30, 35, 40]),
    ];
    for (got, (pieces, score, w, h, moves, goals)) in levels.iter().zip(expected) {
        assert_eq!(
            (got.num_different_pieces, got.score_goal, got.board_width, got.board_height, got.num_moves),
            (pieces, score, w, h, moves)
        );
        assert_eq!(got.collection_goals, goals);
    }
    assert_eq!(batch_to_json(&levels), OVERSIZED_BATCH);
    assert_eq!(parse_batch(&batch_to_json(&levels)).unwrap(), levels);
}

#[test]
fn oversized_batch_under_strict_and_clamp() {
    let ranges = ParamRanges::default();
    let levels = parse_batch(OVERSIZED_BATCH).unwrap();
    let mut flagged_moves = Vec::new();
    for level in &levels {
        let (_, report) = validate(level, &ranges, Policy::Strict);
        assert_eq!(report.action, Action::Rejected);
        let fields: BTreeSet<&str> = report.violations.iter().map(|v| v.field.as_str()).collect();
        for i in 0..level.collection_goals.len() {
            assert!(fields.contains(format!("collection_goals[{i}]").as_str()));
        }
        if fields.contains("num_moves") {
            flagged_moves.push(level.num_moves);
        }
        let others: Vec<_> =
            fields.iter().filter(|f| !f.starts_with("collection_goals[") && **f != "num_moves").collect();
        assert!(others.is_empty(), "unexpected violations {others:?}");

        let (clamped, report) = validate(level, &ranges, Policy::Clamp);
        assert_eq!(report.action, Action::Clamped);
        assert!(satisfies_invariants(&clamped, &ranges));
        let (again, second) = validate(&clamped, &ranges, Policy::Clamp);
        assert_eq!(second.action, Action::Accepted);
        assert_eq!(again, clamped);
    }
    assert_eq!(flagged_moves, vec![35, 40]);

    let (clamped, report) = validate(&levels[1], &ranges, Policy::Clamp);
    assert_eq!(clamped.num_moves, 30);
    assert_eq!(clamped.collection_goals, vec![15, 15, 15]);
    assert_eq!(report.violations.len(), 4);
}

#[test]
fn level_number_is_accepted_and_ignored() {
    let json = r#"[{"level_number": 7, "num_different_pieces": 3, "score_goal": 900, "board_width": 4,
        "board_height": 4, "num_moves": 25, "collection_goals": [5, 6]}]"#;
    let levels = parse_batch(json).unwrap();
    assert_eq!(levels[0].score_goal, 900);
    assert!(!batch_to_json(&levels).contains("level_number"));
}

#[test]
fn ten_thousand_instantiations_are_playable() {
    let ranges = ParamRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let params = generate_traditional(&mut rng, &ranges);
        let inst = instantiate(&params, &mut rng).unwrap();
        assert!(find_matches(&inst.board).is_empty());
        assert!(!available_moves(&inst.board).is_empty());
        assert_eq!(inst.board.width() as i64, params.board_width);
        assert_eq!(inst.board.height() as i64, params.board_height);
        assert!(inst.board.cells().iter().all(|&c| (c as i64) < params.num_different_pieces));
        let distinct: BTreeSet<_> = inst.goal_colors.iter().collect();
        assert_eq!(distinct.len(), params.collection_goals.len());
    }
}

#[test]
fn same_seed_same_instance() {
    let params = generate_traditional(&mut ChaCha8Rng::seed_from_u64(3), &ParamRanges::default());
    let a = instantiate(&params, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let b = instantiate(&params, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_eq!(a, b);
}
