//! Deterministic Match-3 rules engine.
//!
//! Boards are row-major with row 0 at the top; gravity pulls pieces towards
//! higher row indices. Every transition takes a state plus an explicit random
//! source and returns a new state, so games can run in parallel and replay
//! exactly from a seed.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Piece colour index, `0..palette`.
pub type Color = u8;

/// Upper bound on distinct colours any board may hold.
pub const MAX_COLORS: usize = 8;

/// Points per cleared piece.
pub const POINTS_PER_PIECE: u32 = 20;
/// Extra points for every piece beyond three in a single match group.
pub const BONUS_PER_EXTRA_PIECE: u32 = 10;
/// Boosters available per level.
pub const DEFAULT_BOOSTER_BUDGET: u32 = 3;

const EMPTY: Color = Color::MAX;
const MAX_SETTLE_PASSES: usize = 1_000;
const MAX_RESHUFFLES: usize = 100;
const MAX_REGENERATIONS: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("cell {0} is outside the {1}x{2} board")]
    OutOfBounds(Pos, usize, usize),
    #[error("booster budget of {0} exhausted")]
    BoosterBudgetExhausted(u32),
    #[error("level is already over")]
    LevelOver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn is_adjacent(self, other: Pos) -> bool {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col) == 1
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Anything that can hand out refill pieces. Implemented for every [`Rng`];
/// tests substitute scripted sources.
pub trait PieceSource {
    fn next_piece(&mut self, palette: u8) -> Color;
}

impl<R: Rng + ?Sized> PieceSource for R {
    fn next_piece(&mut self, palette: u8) -> Color {
        self.random_range(0..palette)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Board {
    width: usize,
    height: usize,
    cells: Vec<Color>,
}

impl Board {
    /// Builds a board from rows listed top to bottom.
    ///
    /// Panics if rows are ragged or a colour is out of range.
    pub fn from_rows<R: AsRef<[Color]>>(rows: &[R]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(width * height);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), width, "ragged board rows");
            for &c in row {
                assert!((c as usize) < MAX_COLORS, "colour {c} out of range");
                cells.push(c);
            }
        }
        Self { width, height, cells }
    }

    /// Fills a board row by row so that no run of three ever forms.
    /// Needs a palette of at least three colours to be match-free.
    pub fn random_without_matches<R: Rng + ?Sized>(
        width: usize,
        height: usize,
        palette: u8,
        rng: &mut R,
    ) -> Self {
        let mut board = Self { width, height, cells: vec![EMPTY; width * height] };
        let mut allowed = Vec::with_capacity(palette as usize);
        for row in 0..height {
            for col in 0..width {
                allowed.clear();
                for c in 0..palette {
                    let left = col >= 2
                        && board.at(row, col - 1) == c
                        && board.at(row, col - 2) == c;
                    let up = row >= 2
                        && board.at(row - 1, col) == c
                        && board.at(row - 2, col) == c;
                    if !left && !up {
                        allowed.push(c);
                    }
                }
                let pick = if allowed.is_empty() {
                    rng.random_range(0..palette)
                } else {
                    allowed[rng.random_range(0..allowed.len())]
                };
                board.cells[row * width + col] = pick;
            }
        }
        board
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Color] {
        &self.cells
    }

    pub fn contains(&self, pos: Pos) -> bool {
        pos.row < self.height && pos.col < self.width
    }

    pub fn get(&self, pos: Pos) -> Color {
        self.at(pos.row, pos.col)
    }

    /// Count of cells currently holding a piece.
    pub fn populated(&self) -> usize {
        self.cells.iter().filter(|&&c| c != EMPTY).count()
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |row| (0..self.width).map(move |col| Pos::new(row, col)))
    }

    /// All orthogonally adjacent pairs, each listed once (right and down).
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (Pos, Pos)> + '_ {
        self.positions().flat_map(move |p| {
            let right = (p.col + 1 < self.width).then(|| (p, Pos::new(p.row, p.col + 1)));
            let down = (p.row + 1 < self.height).then(|| (p, Pos::new(p.row + 1, p.col)));
            right.into_iter().chain(down)
        })
    }

    fn at(&self, row: usize, col: usize) -> Color {
        self.cells[row * self.width + col]
    }

    fn idx(&self, pos: Pos) -> usize {
        pos.row * self.width + pos.col
    }

    fn swap(&mut self, a: Pos, b: Pos) {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.cells.swap(ia, ib);
    }

    /// Length of the same-colour run through `pos` along one axis.
    fn run_len(&self, pos: Pos, horizontal: bool) -> usize {
        let c = self.get(pos);
        if c == EMPTY {
            return 0;
        }
        let (fixed, along, limit) = if horizontal {
            (pos.row, pos.col, self.width)
        } else {
            (pos.col, pos.row, self.height)
        };
        let colour_at = |i: usize| {
            if horizontal {
                self.at(fixed, i)
            } else {
                self.at(i, fixed)
            }
        };
        let mut len = 1;
        let mut i = along;
        while i > 0 && colour_at(i - 1) == c {
            len += 1;
            i -= 1;
        }
        let mut i = along + 1;
        while i < limit && colour_at(i) == c {
            len += 1;
            i += 1;
        }
        len
    }

    fn has_match_through(&self, pos: Pos) -> bool {
        self.run_len(pos, true) >= 3 || self.run_len(pos, false) >= 3
    }

    /// Pulls pieces down into holes; returns nothing, holes end up on top.
    fn apply_gravity(&mut self) {
        for col in 0..self.width {
            let mut write = self.height;
            for row in (0..self.height).rev() {
                let c = self.at(row, col);
                if c != EMPTY {
                    write -= 1;
                    self.cells[write * self.width + col] = c;
                }
            }
            for row in 0..write {
                self.cells[row * self.width + col] = EMPTY;
            }
        }
    }

    fn refill<S: PieceSource + ?Sized>(&mut self, palette: u8, src: &mut S) {
        // Column by column, bottom-most hole first.
        for col in 0..self.width {
            for row in (0..self.height).rev() {
                if self.at(row, col) == EMPTY {
                    self.cells[row * self.width + col] = src.next_piece(palette);
                }
            }
        }
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..self.height {
            for col in 0..self.width {
                match self.at(row, col) {
                    EMPTY => write!(f, ".")?,
                    c => write!(f, "{c}")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Same-colour cells made of one or more overlapping runs of three or more.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchGroup {
    pub color: Color,
    /// Sorted, distinct.
    pub cells: Vec<Pos>,
}

impl MatchGroup {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn score(&self) -> u32 {
        group_score(self.cells.len())
    }
}

pub fn group_score(size: usize) -> u32 {
    let size = size as u32;
    POINTS_PER_PIECE * size + BONUS_PER_EXTRA_PIECE * size.saturating_sub(3)
}

/// Finds every match group. Runs of one colour that share a cell are merged.
pub fn find_matches(board: &Board) -> Vec<MatchGroup> {
    let mut runs: Vec<Vec<Pos>> = Vec::new();
    for row in 0..board.height {
        let mut start = 0;
        while start < board.width {
            let c = board.at(row, start);
            let mut end = start + 1;
            while end < board.width && board.at(row, end) == c {
                end += 1;
            }
            if c != EMPTY && end - start >= 3 {
                runs.push((start..end).map(|col| Pos::new(row, col)).collect());
            }
            start = end;
        }
    }
    for col in 0..board.width {
        let mut start = 0;
        while start < board.height {
            let c = board.at(start, col);
            let mut end = start + 1;
            while end < board.height && board.at(end, col) == c {
                end += 1;
            }
            if c != EMPTY && end - start >= 3 {
                runs.push((start..end).map(|row| Pos::new(row, col)).collect());
            }
            start = end;
        }
    }
    if runs.is_empty() {
        return Vec::new();
    }

    // Union runs through shared cells: owner[cell] is the first run seen there.
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner = vec![usize::MAX; board.cells.len()];
    for (r, run) in runs.iter().enumerate() {
        for &p in run {
            let i = board.idx(p);
            if owner[i] == usize::MAX {
                owner[i] = r;
            } else {
                let (a, b) = (root(&mut parent, owner[i]), root(&mut parent, r));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }

    let mut by_root: Vec<Vec<Pos>> = vec![Vec::new(); runs.len()];
    for (r, run) in runs.iter().enumerate() {
        let top = root(&mut parent, r);
        by_root[top].extend_from_slice(run);
    }
    let mut groups: Vec<MatchGroup> = by_root
        .into_iter()
        .filter(|cells| !cells.is_empty())
        .map(|mut cells| {
            cells.sort();
            cells.dedup();
            MatchGroup { color: board.get(cells[0]), cells }
        })
        .collect();
    groups.sort_by_key(|g| g.cells[0]);
    groups
}

/// Per-colour piece counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorCounts(pub [u32; MAX_COLORS]);

impl ColorCounts {
    pub fn get(&self, color: Color) -> u32 {
        self.0[color as usize]
    }

    pub fn add(&mut self, color: Color, n: u32) {
        self.0[color as usize] += n;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    fn merge(&mut self, other: &ColorCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settled {
    pub board: Board,
    pub cleared: ColorCounts,
    pub score_delta: u32,
    /// Number of clearing passes; 0 when the board was already stable.
    pub cascades: u32,
}

/// Clears matches, drops pieces and refills until the board is stable.
pub fn settle<S: PieceSource + ?Sized>(board: &Board, palette: u8, src: &mut S) -> Settled {
    let mut board = board.clone();
    let mut cleared = ColorCounts::default();
    let mut score_delta = 0;
    let mut cascades = 0;
    loop {
        let groups = find_matches(&board);
        if groups.is_empty() {
            break;
        }
        if cascades as usize >= MAX_SETTLE_PASSES {
            // Only reachable with palettes too small to ever stabilise.
            board = regenerate_playable(board.width, board.height, palette, &mut RefillRng(src));
            break;
        }
        cascades += 1;
        for g in &groups {
            score_delta += g.score();
            cleared.add(g.color, g.len() as u32);
            for &p in &g.cells {
                let i = board.idx(p);
                board.cells[i] = EMPTY;
            }
        }
        board.apply_gravity();
        board.refill(palette, src);
    }
    Settled { board, cleared, score_delta, cascades }
}

/// Adapts a [`PieceSource`] into an [`rand::RngCore`] for the rare
/// regeneration path inside [`settle`].
struct RefillRng<'a, S: PieceSource + ?Sized>(&'a mut S);

impl<S: PieceSource + ?Sized> rand::RngCore for RefillRng<'_, S> {
    fn next_u32(&mut self) -> u32 {
        let mut v = 0u32;
        for _ in 0..4 {
            v = (v << 8) | self.0.next_piece(u8::MAX) as u32;
        }
        v
    }

    fn next_u64(&mut self) -> u64 {
        ((self.next_u32() as u64) << 32) | self.next_u32() as u64
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for b in dst {
            *b = self.0.next_piece(u8::MAX);
        }
    }
}

/// Every swap that would produce at least one match.
pub fn available_moves(board: &Board) -> Vec<(Pos, Pos)> {
    let mut scratch = board.clone();
    board
        .adjacent_pairs()
        .filter(|&(a, b)| {
            scratch.swap(a, b);
            let hit = scratch.has_match_through(a) || scratch.has_match_through(b);
            scratch.swap(a, b);
            hit
        })
        .collect()
}

/// Pieces a swap would clear in its first pass; zero if it does not match.
pub fn immediate_clear(board: &Board, a: Pos, b: Pos) -> usize {
    let mut scratch = board.clone();
    scratch.swap(a, b);
    find_matches(&scratch).iter().map(MatchGroup::len).sum()
}

/// Reshuffles a deadlocked board, or regenerates it after too many attempts.
pub fn resolve_deadlock<R: Rng + ?Sized>(board: &Board, palette: u8, rng: &mut R) -> Board {
    if !available_moves(board).is_empty() {
        return board.clone();
    }
    let mut shuffled = board.clone();
    for _ in 0..MAX_RESHUFFLES {
        shuffled.cells.shuffle(rng);
        if find_matches(&shuffled).is_empty() && !available_moves(&shuffled).is_empty() {
            return shuffled;
        }
    }
    regenerate_playable(board.width, board.height, palette, rng)
}

/// A match-free board with at least one productive swap.
pub(crate) fn regenerate_playable<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    palette: u8,
    rng: &mut R,
) -> Board {
    let mut board = Board::random_without_matches(width, height, palette, rng);
    for _ in 0..MAX_REGENERATIONS {
        if find_matches(&board).is_empty() && !available_moves(&board).is_empty() {
            break;
        }
        board = Board::random_without_matches(width, height, palette, rng);
    }
    board
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Committed,
    Reverted,
    Illegal,
    /// Booster activation; `region` is the number of cells it cleared directly.
    Boosted { region: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub cleared: ColorCounts,
    pub score_delta: u32,
    pub cascades: u32,
}

impl MoveOutcome {
    fn nothing(kind: MoveKind) -> Self {
        Self { kind, cleared: ColorCounts::default(), score_delta: 0, cascades: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelStatus {
    InProgress,
    Completed,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionGoal {
    pub color: Color,
    pub target: u32,
}

/// What the player must achieve, with goal colours already assigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objectives {
    pub score_goal: u32,
    pub num_moves: u32,
    pub collection: Vec<CollectionGoal>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelState {
    pub board: Board,
    pub palette: u8,
    pub objectives: Objectives,
    pub score: u32,
    pub moves_left: u32,
    /// Parallel to `objectives.collection`.
    pub collection_progress: Vec<u32>,
    pub failed_moves: u32,
    pub clicks: u32,
    pub boosters_used: u32,
    pub booster_budget: u32,
}

impl LevelState {
    pub fn new(board: Board, palette: u8, objectives: Objectives) -> Self {
        Self {
            board,
            palette,
            moves_left: objectives.num_moves,
            collection_progress: vec![0; objectives.collection.len()],
            objectives,
            score: 0,
            failed_moves: 0,
            clicks: 0,
            boosters_used: 0,
            booster_budget: DEFAULT_BOOSTER_BUDGET,
        }
    }

    pub fn status(&self) -> LevelStatus {
        level_status(self)
    }

    fn check_bounds(&self, pos: Pos) -> Result<(), EngineError> {
        if self.board.contains(pos) {
            Ok(())
        } else {
            Err(EngineError::OutOfBounds(pos, self.board.width, self.board.height))
        }
    }

    fn credit(&mut self, cleared: &ColorCounts, score_delta: u32) {
        self.score += score_delta;
        for (goal, progress) in self.objectives.collection.iter().zip(&mut self.collection_progress) {
            *progress += cleared.get(goal.color);
        }
    }

    /// Attempts to swap two cells. Every attempt costs two clicks; a
    /// non-adjacent pair is refused and changes nothing else.
    pub fn apply_move<R: Rng + ?Sized>(
        &self,
        a: Pos,
        b: Pos,
        rng: &mut R,
    ) -> Result<(LevelState, MoveOutcome), EngineError> {
        self.check_bounds(a)?;
        self.check_bounds(b)?;
        if self.status() != LevelStatus::InProgress {
            return Err(EngineError::LevelOver);
        }
        let mut next = self.clone();
        next.clicks += 2;
        if !a.is_adjacent(b) {
            return Ok((next, MoveOutcome::nothing(MoveKind::Illegal)));
        }
        let mut swapped = self.board.clone();
        swapped.swap(a, b);
        if !(swapped.has_match_through(a) || swapped.has_match_through(b)) {
            next.failed_moves += 1;
            return Ok((next, MoveOutcome::nothing(MoveKind::Reverted)));
        }
        let settled = settle(&swapped, self.palette, rng);
        next.board = resolve_deadlock(&settled.board, self.palette, rng);
        next.credit(&settled.cleared, settled.score_delta);
        next.moves_left -= 1;
        Ok((
            next,
            MoveOutcome {
                kind: MoveKind::Committed,
                cleared: settled.cleared,
                score_delta: settled.score_delta,
                cascades: settled.cascades,
            },
        ))
    }

    /// Clears the 3x3 block around `cell` (clipped to the board) without
    /// spending a move. Cleared pieces score [`POINTS_PER_PIECE`] each.
    pub fn use_booster<R: Rng + ?Sized>(
        &self,
        cell: Pos,
        rng: &mut R,
    ) -> Result<(LevelState, MoveOutcome), EngineError> {
        self.check_bounds(cell)?;
        if self.status() != LevelStatus::InProgress {
            return Err(EngineError::LevelOver);
        }
        if self.boosters_used >= self.booster_budget {
            return Err(EngineError::BoosterBudgetExhausted(self.booster_budget));
        }
        let mut next = self.clone();
        next.clicks += 1;
        next.boosters_used += 1;

        let mut board = self.board.clone();
        let mut cleared = ColorCounts::default();
        let mut region = 0;
        for row in cell.row.saturating_sub(1)..=(cell.row + 1).min(board.height - 1) {
            for col in cell.col.saturating_sub(1)..=(cell.col + 1).min(board.width - 1) {
                let i = row * board.width + col;
                cleared.add(board.cells[i], 1);
                board.cells[i] = EMPTY;
                region += 1;
            }
        }
        let mut score_delta = POINTS_PER_PIECE * region;
        board.apply_gravity();
        board.refill(self.palette, rng);
        let settled = settle(&board, self.palette, rng);
        cleared.merge(&settled.cleared);
        score_delta += settled.score_delta;
        next.board = resolve_deadlock(&settled.board, self.palette, rng);
        next.credit(&cleared, score_delta);
        Ok((
            next,
            MoveOutcome {
                kind: MoveKind::Boosted { region },
                cleared,
                score_delta,
                cascades: settled.cascades,
            },
        ))
    }
}

pub fn level_status(state: &LevelState) -> LevelStatus {
    let collected = state
        .objectives
        .collection
        .iter()
        .zip(&state.collection_progress)
        .all(|(goal, &got)| got >= goal.target);
    if state.score >= state.objectives.score_goal && collected {
        LevelStatus::Completed
    } else if state.moves_left == 0 {
        LevelStatus::Failed
    } else {
        LevelStatus::InProgress
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hands out a fixed sequence of colours, cycling when exhausted.
    struct Scripted {
        seq: Vec<Color>,
        at: usize,
    }

    impl PieceSource for Scripted {
        fn next_piece(&mut self, _palette: u8) -> Color {
            let c = self.seq[self.at % self.seq.len()];
            self.at += 1;
            c
        }
    }

    fn objectives(score_goal: u32, moves: u32, goals: &[(Color, u32)]) -> Objectives {
        Objectives {
            score_goal,
            num_moves: moves,
            collection: goals.iter().map(|&(color, target)| CollectionGoal { color, target }).collect(),
        }
    }

    #[test]
    fn single_horizontal_run_of_four() {
        let board = Board::from_rows(&[[0, 0, 0, 0], [1, 2, 1, 2], [2, 1, 2, 1], [1, 2, 1, 2]]);
        let groups = find_matches(&board);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 4);
        assert_eq!(groups[0].color, 0);
    }

    #[test]
    fn no_run_no_groups() {
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]);
        assert!(find_matches(&board).is_empty());
    }

    #[test]
    fn l_shape_merges_into_one_group() {
        let board = Board::from_rows(&[
            [0, 0, 0, 1, 2],
            [0, 1, 2, 2, 1],
            [0, 2, 1, 1, 2],
            [1, 1, 2, 2, 1],
            [2, 2, 1, 1, 2],
        ]);
        let groups = find_matches(&board);
        assert_eq!(groups.len(), 1);
        assert_eq!(
            groups[0].cells,
            vec![Pos::new(0, 0), Pos::new(0, 1), Pos::new(0, 2), Pos::new(1, 0), Pos::new(2, 0)]
        );
    }

    #[test]
    fn parallel_runs_stay_separate_groups() {
        let board = Board::from_rows(&[[0, 0, 0, 1], [0, 0, 0, 2], [1, 2, 1, 2], [2, 1, 2, 1]]);
        let groups = find_matches(&board);
        assert_eq!(groups.len(), 2);
        assert!(groups.iter().all(|g| g.len() == 3));
    }

    #[test]
    fn scoring_rule() {
        assert_eq!(group_score(3), 60);
        assert_eq!(group_score(4), 90);
        assert_eq!(group_score(5), 120);
    }

    #[test]
    fn non_adjacent_swap_is_illegal() {
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]);
        let state = LevelState::new(board, 3, objectives(700, 20, &[(0, 5)]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (next, out) = state.apply_move(Pos::new(0, 0), Pos::new(2, 0), &mut rng).unwrap();
        assert_eq!(out.kind, MoveKind::Illegal);
        assert_eq!(next.board, state.board);
        assert_eq!(next.moves_left, state.moves_left);
        assert_eq!(next.failed_moves, state.failed_moves);
        assert_eq!(next.clicks, state.clicks + 2);
    }

    #[test]
    fn out_of_bounds_is_an_error_not_illegal() {
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]);
        let state = LevelState::new(board, 3, objectives(700, 20, &[]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = state.apply_move(Pos::new(0, 3), Pos::new(0, 4), &mut rng).unwrap_err();
        assert!(matches!(err, EngineError::OutOfBounds(..)));
    }

    #[test]
    fn unproductive_swap_reverts() {
        let board = Board::from_rows(&[[0, 1, 2, 0], [1, 2, 0, 1], [2, 0, 1, 2], [0, 1, 2, 0]]);
        let state = LevelState::new(board, 3, objectives(700, 20, &[]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (next, out) = state.apply_move(Pos::new(0, 0), Pos::new(0, 1), &mut rng).unwrap();
        assert_eq!(out.kind, MoveKind::Reverted);
        assert_eq!(out.score_delta, 0);
        assert_eq!(out.cleared.total(), 0);
        assert_eq!(next.failed_moves, 1);
        assert_eq!(next.moves_left, 20);
        assert_eq!(next.board, state.board);
    }

    /// Fixture: swapping (1,2)<->(0,2) completes 1,1,1 along row 0.
    fn single_run_fixture() -> Board {
        Board::from_rows(&[[1, 1, 0, 2], [2, 0, 1, 2], [0, 2, 0, 1], [2, 0, 2, 0]])
    }

    #[test]
    fn committed_run_of_three_scores_sixty() {
        let board = single_run_fixture();
        assert!(find_matches(&board).is_empty());
        let state = LevelState::new(board, 3, objectives(700, 20, &[(1, 5)]));
        // Refill colours chosen so the dropped pieces do not match.
        let mut src = Scripted { seq: vec![2, 0, 2], at: 0 };
        let mut swapped = state.board.clone();
        swapped.swap(Pos::new(0, 2), Pos::new(1, 2));
        let settled = settle(&swapped, 3, &mut src);
        assert_eq!(settled.cascades, 1);
        assert_eq!(settled.cleared.get(1), 3);
        assert_eq!(settled.cleared.total(), 3);
        assert_eq!(settled.score_delta, 60);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (next, out) = state.apply_move(Pos::new(0, 2), Pos::new(1, 2), &mut rng).unwrap();
        assert_eq!(out.kind, MoveKind::Committed);
        assert_eq!(next.moves_left, 19);
        assert!(out.score_delta >= 60);
        assert!(out.cleared.get(1) >= 3);
        assert_eq!(next.collection_progress[0], out.cleared.get(1));
    }

    #[test]
    fn stable_board_settles_to_itself() {
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]);
        let mut src = Scripted { seq: vec![0], at: 0 };
        let s = settle(&board, 3, &mut src);
        assert_eq!(s.board, board);
        assert_eq!((s.cleared.total(), s.score_delta, s.cascades), (0, 0, 0));
        assert_eq!(src.at, 0);
    }

    #[test]
    fn cascade_fixture_two_passes() {
        // Clearing the 1s on row 3 drops columns 0..3 by one, which lines up
        // the 2s at (2,1),(2,2) with the 2 at (3,3).
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 2, 2, 1], [1, 1, 1, 2]]);
        assert_eq!(find_matches(&board).len(), 1);
        let mut src = Scripted { seq: vec![2, 0, 2, 1, 0, 2], at: 0 };
        let s = settle(&board, 3, &mut src);
        assert_eq!(s.cascades, 2);
        assert_eq!(s.cleared.get(1), 3);
        assert_eq!(s.cleared.get(2), 3);
        assert_eq!(s.cleared.total(), 6);
        assert_eq!(s.score_delta, 120);
        assert_eq!(src.at, 6);
        assert_eq!(
            s.board,
            Board::from_rows(&[[2, 1, 0, 2], [0, 0, 2, 1], [1, 1, 0, 0], [0, 0, 1, 1]])
        );
    }

    #[test]
    fn saturated_board_clears_everything_first_pass() {
        let board = Board::from_rows(&[[0; 4]; 4]);
        let groups = find_matches(&board);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 16);
        let mut src = Scripted { seq: vec![0, 1, 2, 1, 2, 0, 2, 0, 1], at: 0 };
        let s = settle(&board, 3, &mut src);
        assert!(s.cleared.get(0) >= 16);
        assert!(find_matches(&s.board).is_empty());
    }

    #[test]
    fn available_moves_cases() {
        let dead = Board::from_rows(&[[0, 1, 2, 0], [1, 2, 0, 1], [2, 0, 1, 2], [0, 1, 2, 0]]);
        // Diagonal stripes of three colours: no swap lines up three.
        assert!(available_moves(&dead).is_empty());

        let full = Board::from_rows(&[[0; 4]; 4]);
        assert_eq!(available_moves(&full).len(), 2 * 4 * 4 - 4 - 4);
    }

    #[test]
    fn booster_region_and_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let board = regenerate_playable(5, 5, 4, &mut rng);
        let state = LevelState::new(board, 4, objectives(5_000, 20, &[(0, 50)]));
        let (after, out) = state.use_booster(Pos::new(2, 2), &mut rng).unwrap();
        assert_eq!(out.kind, MoveKind::Boosted { region: 9 });
        assert!(out.cleared.total() >= 9);
        assert_eq!(after.moves_left, 20);
        assert_eq!(after.boosters_used, 1);

        let (_, corner) = state.use_booster(Pos::new(0, 0), &mut rng).unwrap();
        assert_eq!(corner.kind, MoveKind::Boosted { region: 4 });

        let mut s = state;
        for _ in 0..3 {
            s = s.use_booster(Pos::new(1, 1), &mut rng).unwrap().0;
        }
        assert_eq!(s.boosters_used, 3);
        assert_eq!(
            s.use_booster(Pos::new(1, 1), &mut rng).unwrap_err(),
            EngineError::BoosterBudgetExhausted(3)
        );
    }

    #[test]
    fn status_rules() {
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]);
        let mut s = LevelState::new(board, 3, objectives(900, 25, &[(0, 5), (1, 5)]));
        s.score = 1460;
        s.collection_progress = vec![5, 7];
        assert_eq!(level_status(&s), LevelStatus::Completed);
        s.collection_progress = vec![5, 4];
        assert_eq!(level_status(&s), LevelStatus::InProgress);
        s.score = 300;
        s.moves_left = 0;
        assert_eq!(level_status(&s), LevelStatus::Failed);
    }

    #[test]
    fn moves_after_level_end_are_refused() {
        let board = Board::from_rows(&[[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]);
        let mut s = LevelState::new(board, 3, objectives(900, 25, &[]));
        s.moves_left = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            s.apply_move(Pos::new(0, 0), Pos::new(0, 1), &mut rng).unwrap_err(),
            EngineError::LevelOver
        );
    }

    #[test]
    fn deadlocked_board_gets_reshuffled() {
        let dead = Board::from_rows(&[[0, 1, 2, 0], [1, 2, 0, 1], [2, 0, 1, 2], [0, 1, 2, 0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fixed = resolve_deadlock(&dead, 3, &mut rng);
        assert!(find_matches(&fixed).is_empty());
        assert!(!available_moves(&fixed).is_empty());
        let mut a = dead.cells().to_vec();
        let mut b = fixed.cells().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b, "reshuffle keeps the colour multiset");
    }
}
