//! Players, experiment groups, gameplay events and the analysis export.
//!
//! Events are kept in memory and, when the store is opened on a directory,
//! appended to `events.jsonl` one JSON object per line. `profiles.json` holds
//! a compacted snapshot of player profiles so a restart does not need to
//! replay the whole log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::levelgen::{BatchSource, LevelBatch, LevelParams};

pub const EVENT_LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "profiles.json";

/// Telemetry for one level attempt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameplayRecord {
    pub level_in_row: u32,
    pub score: u32,
    pub score_goal: u32,
    pub moves_left: u32,
    pub num_moves: u32,
    pub num_failed_moves: u32,
    pub num_clicks_on_board: u32,
    pub num_boosters_used: u32,
    /// Absent when the player never reached the rating screen.
    #[serde(default)]
    pub user_rating: Option<u8>,
    pub level_params: LevelParams,
}

impl GameplayRecord {
    /// Field-level problems, empty when the record is well formed.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.moves_left > self.num_moves {
            out.push(format!("moves_left {} exceeds num_moves {}", self.moves_left, self.num_moves));
        }
        if let Some(r) = self.user_rating {
            if !(1..=5).contains(&r) {
                out.push(format!("user_rating {r} outside 1..=5"));
            }
        }
        if self.level_in_row == 0 {
            out.push("level_in_row must start at 1".into());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    LlmPcg,
    TraditionalPcg,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::LlmPcg => "llm_pcg",
            Group::TraditionalPcg => "traditional_pcg",
        }
    }
}

/// Stable group for an id: parity of the first 8 bytes of its SHA-256.
pub fn group_for(player_id: &str) -> Group {
    let digest = Sha256::digest(player_id.as_bytes());
    let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    if word % 2 == 0 {
        Group::LlmPcg
    } else {
        Group::TraditionalPcg
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerProfile {
    pub player_id: String,
    pub group: Group,
    pub created_at: DateTime<Utc>,
    /// Completed runs in order; ratings are filled in as they arrive.
    pub history: Vec<GameplayRecord>,
    /// Most recently generated batch.
    pub pending_levels: Option<LevelBatch>,
    /// Rated runs in `history` when `pending_levels` was generated.
    pub pending_for_history: usize,
    /// Batch last handed to the player.
    pub last_served_batch: Option<LevelBatch>,
}

impl PlayerProfile {
    /// Completed and rated runs, the input to prompt building.
    pub fn rated_history(&self) -> Vec<GameplayRecord> {
        self.history.iter().filter(|r| r.user_rating.is_some()).cloned().collect()
    }

    pub fn rated_count(&self) -> usize {
        self.history.iter().filter(|r| r.user_rating.is_some()).count()
    }

    /// True when the pending batch already reflects every rated completion.
    pub fn pending_is_fresh(&self) -> bool {
        self.pending_levels.is_some() && self.pending_for_history == self.rated_count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    PlayerCreated { group: Group },
    Started,
    Completed { record: GameplayRecord },
    Failed { record: GameplayRecord },
    Quit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record: Option<GameplayRecord>,
    },
    Rated { user_rating: u8 },
    ScreenView { name: String },
    BatchGenerated { source: BatchSource, levels: Vec<LevelParams>, history_len: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::PlayerCreated { .. } => "player_created",
            EventKind::Started => "started",
            EventKind::Completed { .. } => "completed",
            EventKind::Failed { .. } => "failed",
            EventKind::Quit { .. } => "quit",
            EventKind::Rated { .. } => "rated",
            EventKind::ScreenView { .. } => "screen_view",
            EventKind::BatchGenerated { .. } => "batch_generated",
        }
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRunEvent {
    pub timestamp: DateTime<Utc>,
    pub player_id: String,
    /// 0 for events not tied to a level run.
    #[serde(default)]
    pub level_in_row: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("player {0} already exists")]
    PlayerExists(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt log line {line}: {source}")]
    Corrupt { line: usize, source: serde_json::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Recorded,
    /// Same (player, level, kind) seen before; nothing was written.
    Duplicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Terminal {
    Completed,
    Failed,
    Quit,
}

#[derive(Clone, Debug)]
struct Run {
    group: Group,
    terminal: Option<Terminal>,
    rating: Option<u8>,
}

/// Source of event timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock that advances a fixed step on every reading.
pub struct LogicalClock {
    start: DateTime<Utc>,
    step_ms: i64,
    ticks: AtomicI64,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self { start, step_ms, ticks: AtomicI64::new(0) }
    }

    /// 2024-01-01T00:00:00Z, one second per reading.
    pub fn default_epoch() -> Self {
        Self::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(), 1_000)
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let t = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + Duration::milliseconds(t * self.step_ms)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    events_applied: usize,
    profiles: BTreeMap<String, PlayerProfile>,
}

/// Event store. Not internally synchronized: callers serialize writes.
pub struct Store {
    profiles: BTreeMap<String, PlayerProfile>,
    events: Vec<LevelRunEvent>,
    /// Started runs in start order.
    run_order: Vec<(String, u32)>,
    runs: HashMap<(String, u32), Run>,
    sink: Option<BufWriter<File>>,
    dir: Option<PathBuf>,
}

impl Default for Store {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            profiles: BTreeMap::new(),
            events: Vec::new(),
            run_order: Vec::new(),
            runs: HashMap::new(),
            sink: None,
            dir: None,
        }
    }

    /// Opens (or creates) a store directory, restoring profiles from the
    /// snapshot plus any log lines written after it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, TelemetryError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let log_path = dir.join(EVENT_LOG_FILE);
        let events = if log_path.exists() { read_log(&log_path)? } else { Vec::new() };

        let mut store = Self::in_memory();
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let mut skip = 0;
        if snapshot_path.exists() {
            let snap: Snapshot = serde_json::from_slice(&fs::read(&snapshot_path)?)
                .map_err(|e| TelemetryError::Corrupt { line: 0, source: e })?;
            if snap.events_applied <= events.len() {
                skip = snap.events_applied;
                store.profiles = snap.profiles;
            }
        }
        for (i, ev) in events.into_iter().enumerate() {
            store.apply(&ev, i >= skip);
            store.events.push(ev);
        }
        let file = OpenOptions::new().create(true).append(true).open(&log_path)?;
        store.sink = Some(BufWriter::new(file));
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    /// Rebuilds a read-only store from an event log file.
    pub fn replay(path: impl AsRef<Path>) -> Result<Self, TelemetryError> {
        let mut store = Self::in_memory();
        for ev in read_log(path.as_ref())? {
            store.apply(&ev, true);
            store.events.push(ev);
        }
        Ok(store)
    }

    /// Writes the profile snapshot next to the log.
    pub fn compact(&mut self) -> Result<(), TelemetryError> {
        let Some(dir) = self.dir.clone() else { return Ok(()) };
        self.flush()?;
        let snap = Snapshot { events_applied: self.events.len(), profiles: self.profiles.clone() };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&snap).expect("profiles serialize"))?;
        fs::rename(tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), TelemetryError> {
        if let Some(sink) = &mut self.sink {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn profile(&self, player_id: &str) -> Option<&PlayerProfile> {
        self.profiles.get(player_id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &PlayerProfile> {
        self.profiles.values()
    }

    pub fn events(&self) -> &[LevelRunEvent] {
        &self.events
    }

    /// Returns the stored group, creating the profile on first sight.
    pub fn assign_group(&mut self, player_id: &str, now: DateTime<Utc>) -> Result<Group, TelemetryError> {
        if let Some(p) = self.profiles.get(player_id) {
            return Ok(p.group);
        }
        let group = group_for(player_id);
        self.append(LevelRunEvent {
            timestamp: now,
            player_id: player_id.to_string(),
            level_in_row: 0,
            kind: EventKind::PlayerCreated { group },
        })?;
        Ok(group)
    }

    /// Validates and appends a gameplay event.
    pub fn record_event(&mut self, event: LevelRunEvent) -> Result<Ack, TelemetryError> {
        if !self.profiles.contains_key(&event.player_id) {
            return Err(TelemetryError::UnknownPlayer(event.player_id.clone()));
        }
        let key = (event.player_id.clone(), event.level_in_row);
        let run = self.runs.get(&key);
        let reject = |msg: String| Err(TelemetryError::Rejected(msg));

        match &event.kind {
            EventKind::PlayerCreated { .. } => return reject("players are created through assign_group".into()),
            EventKind::BatchGenerated { levels, .. } if levels.len() != 3 => {
                return reject(format!("batch has {} levels", levels.len()))
            }
            EventKind::BatchGenerated { .. } | EventKind::ScreenView { .. } => {}
            EventKind::Started => {
                if event.level_in_row == 0 {
                    return reject("level_in_row must start at 1".into());
                }
                if run.is_some() {
                    return Ok(Ack::Duplicate);
                }
            }
            EventKind::Completed { record } | EventKind::Failed { record } => {
                check_record(record, event.level_in_row)?;
                let Some(run) = run else {
                    return reject(format!("level {} was never started", event.level_in_row));
                };
                let kind = if matches!(event.kind, EventKind::Completed { .. }) {
                    Terminal::Completed
                } else {
                    Terminal::Failed
                };
                match run.terminal {
                    Some(t) if t == kind => return Ok(Ack::Duplicate),
                    Some(t) => return reject(format!("level {} already ended as {t:?}", event.level_in_row)),
                    None => {}
                }
            }
            EventKind::Quit { record } => {
                if let Some(record) = record {
                    check_record(record, event.level_in_row)?;
                }
                let Some(run) = run else {
                    return reject(format!("level {} was never started", event.level_in_row));
                };
                match run.terminal {
                    Some(Terminal::Quit) => return Ok(Ack::Duplicate),
                    Some(t) => return reject(format!("level {} already ended as {t:?}", event.level_in_row)),
                    None => {}
                }
            }
            EventKind::Rated { user_rating } => {
                if !(1..=5).contains(user_rating) {
                    return reject(format!("rating {user_rating} outside 1..=5"));
                }
                match run {
                    Some(Run { terminal: Some(Terminal::Completed), rating, .. }) => {
                        if rating.is_some() {
                            return Ok(Ack::Duplicate);
                        }
                    }
                    _ => return reject(format!("level {} was not completed; cannot rate", event.level_in_row)),
                }
            }
        }
        self.append(event)?;
        Ok(Ack::Recorded)
    }

    fn append(&mut self, event: LevelRunEvent) -> Result<(), TelemetryError> {
        if let Some(sink) = &mut self.sink {
            let mut line = serde_json::to_string(&event).expect("events serialize");
            line.push('\n');
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        self.apply(&event, true);
        self.events.push(event);
        Ok(())
    }

    /// Folds an event into derived state. `profiles_too` is false for log
    /// lines already reflected in a loaded snapshot.
    fn apply(&mut self, ev: &LevelRunEvent, profiles_too: bool) {
        let key = (ev.player_id.clone(), ev.level_in_row);
        if let EventKind::PlayerCreated { group } = &ev.kind {
            if profiles_too || !self.profiles.contains_key(&ev.player_id) {
                self.profiles.insert(
                    ev.player_id.clone(),
                    PlayerProfile {
                        player_id: ev.player_id.clone(),
                        group: *group,
                        created_at: ev.timestamp,
                        history: Vec::new(),
                        pending_levels: None,
                        pending_for_history: 0,
                        last_served_batch: None,
                    },
                );
            }
            return;
        }
        let Some(group) = self.profiles.get(&ev.player_id).map(|p| p.group) else {
            return;
        };
        match &ev.kind {
            EventKind::Started => {
                self.run_order.push(key.clone());
                self.runs.insert(key, Run { group, terminal: None, rating: None });
            }
            EventKind::Completed { record } => {
                if let Some(run) = self.runs.get_mut(&key) {
                    run.terminal = Some(Terminal::Completed);
                }
                if profiles_too {
                    if let Some(p) = self.profiles.get_mut(&ev.player_id) {
                        p.history.push(record.clone());
                    }
                }
            }
            EventKind::Failed { .. } => {
                if let Some(run) = self.runs.get_mut(&key) {
                    run.terminal = Some(Terminal::Failed);
                }
            }
            EventKind::Quit { .. } => {
                if let Some(run) = self.runs.get_mut(&key) {
                    run.terminal = Some(Terminal::Quit);
                }
            }
            EventKind::Rated { user_rating } => {
                if let Some(run) = self.runs.get_mut(&key) {
                    run.rating = Some(*user_rating);
                }
                if profiles_too {
                    if let Some(p) = self.profiles.get_mut(&ev.player_id) {
                        if let Some(r) = p.history.iter_mut().rev().find(|r| r.level_in_row == ev.level_in_row) {
                            r.user_rating = Some(*user_rating);
                        }
                    }
                }
            }
            EventKind::BatchGenerated { source, levels, history_len } => {
                if profiles_too {
                    if let Some(p) = self.profiles.get_mut(&ev.player_id) {
                        p.pending_levels = Some(LevelBatch {
                            levels: levels.clone(),
                            generated_at: ev.timestamp,
                            source: *source,
                        });
                        p.pending_for_history = *history_len;
                    }
                }
            }
            EventKind::ScreenView { .. } | EventKind::PlayerCreated { .. } => {}
        }
    }

    /// Records which batch was handed out; kept in the snapshot only.
    pub fn mark_served(&mut self, player_id: &str, batch: &LevelBatch) {
        if let Some(p) = self.profiles.get_mut(player_id) {
            if batch.source != BatchSource::Fallback {
                p.last_served_batch = Some(batch.clone());
            }
        }
    }

    /// One row per started level run, in start order.
    pub fn export_dataset(&self, filter: &ExportFilter) -> Vec<ExportRow> {
        let mut first_seen: HashMap<&str, u32> = HashMap::new();
        for (pid, level) in &self.run_order {
            let e = first_seen.entry(pid.as_str()).or_insert(*level);
            *e = (*e).min(*level);
        }
        self.run_order
            .iter()
            .filter_map(|(pid, level)| {
                let run = &self.runs[&(pid.clone(), *level)];
                if filter.group.is_some_and(|g| g != run.group) {
                    return None;
                }
                if filter.first_level_only && first_seen[pid.as_str()] != *level {
                    return None;
                }
                let completed = run.terminal == Some(Terminal::Completed);
                let rating = match (completed, run.rating) {
                    (true, Some(r)) => Some(r),
                    _ if filter.include_dropouts => Some(0),
                    _ => None,
                };
                Some(ExportRow { player_id: pid.clone(), group: run.group, level_in_row: *level, completed, rating })
            })
            .collect()
    }

    /// Count of started runs, completed runs, in one group.
    pub fn completion_counts(&self, group: Group, first_level_only: bool) -> (u64, u64) {
        let rows = self.export_dataset(&ExportFilter { group: Some(group), first_level_only, include_dropouts: false });
        (rows.len() as u64, rows.iter().filter(|r| r.completed).count() as u64)
    }
}

fn check_record(record: &GameplayRecord, level_in_row: u32) -> Result<(), TelemetryError> {
    let mut problems = record.problems();
    if record.level_in_row != level_in_row {
        problems.push(format!("record level_in_row {} does not match event {}", record.level_in_row, level_in_row));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(TelemetryError::Rejected(problems.join("; ")))
    }
}

fn read_log(path: &Path) -> Result<Vec<LevelRunEvent>, TelemetryError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| TelemetryError::Corrupt { line: i + 1, source: e })?;
        out.push(ev);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExportFilter {
    /// Give dropout runs rating 0 instead of leaving it blank.
    pub include_dropouts: bool,
    pub group: Option<Group>,
    /// Keep only each player's first started run.
    pub first_level_only: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub player_id: String,
    pub group: Group,
    pub level_in_row: u32,
    #[serde(with = "bool_as_int")]
    pub completed: bool,
    pub rating: Option<u8>,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        Ok(u8::deserialize(d)? != 0)
    }
}

/// CSV with header `player_id,group,level_in_row,completed,rating`.
pub fn write_csv<W: Write>(rows: &[ExportRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["player_id", "group", "level_in_row", "completed", "rating"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ExportRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
