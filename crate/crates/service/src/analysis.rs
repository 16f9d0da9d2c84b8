//! Turns an event log or CSV export into a Bayesian report.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pcg_core::telemetry::{read_csv, ExportFilter, ExportRow, Group, Store};
use pcg_stats::report::{completion_report, ratings_report, CompletionInput, Tally};
use pcg_stats::{Model, RatingsDataset, Report};

use crate::config::AnalysisConfig;

pub const GROUP_LABELS: [&str; 2] = ["llm_pcg", "traditional_pcg"];

/// Rows from a `.csv` export, or from replaying a JSONL event log.
pub fn load_rows(path: &Path) -> Result<Vec<ExportRow>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        return read_csv(file).with_context(|| format!("reading {}", path.display()));
    }
    let store = Store::replay(path).with_context(|| format!("replaying {}", path.display()))?;
    Ok(store.export_dataset(&ExportFilter { include_dropouts: true, ..Default::default() }))
}

fn tally<'a>(rows: impl Iterator<Item = &'a ExportRow>) -> Tally {
    let mut t = Tally::default();
    for r in rows {
        t.trials += 1;
        t.successes += u64::from(r.completed);
    }
    t
}

/// Completion counts per group, on all started levels and on each player's
/// first started level.
pub fn completion_input(rows: &[ExportRow]) -> CompletionInput {
    let mut first: HashMap<&str, &ExportRow> = HashMap::new();
    for r in rows {
        let e = first.entry(r.player_id.as_str()).or_insert(r);
        if r.level_in_row < e.level_in_row {
            *e = r;
        }
    }
    let of = |g: Group| rows.iter().filter(move |r| r.group == g);
    let first_of = |g: Group| first.values().copied().filter(move |r| r.group == g);
    CompletionInput {
        treatment_all: tally(of(Group::LlmPcg)),
        reference_all: tally(of(Group::TraditionalPcg)),
        treatment_first: tally(first_of(Group::LlmPcg)),
        reference_first: tally(first_of(Group::TraditionalPcg)),
    }
}

/// Ratings of completed runs, or every run with dropouts as rating 0.
pub fn ratings_dataset(rows: &[ExportRow], with_dropouts: bool) -> Result<RatingsDataset> {
    let mut y = Vec::new();
    let mut x = Vec::new();
    for r in rows {
        let rating = match r.rating {
            Some(v) if r.completed && (1..=5).contains(&v) => v,
            _ if with_dropouts => 0,
            _ => continue,
        };
        y.push(rating);
        x.push(u8::from(r.group == Group::LlmPcg));
    }
    let categories = if with_dropouts { (0, 5) } else { (1, 5) };
    Ok(RatingsDataset::new(y, x, categories)?)
}

pub fn analyze(rows: &[ExportRow], model: Model, config: &AnalysisConfig) -> Result<Report> {
    if rows.is_empty() {
        bail!("no level runs to analyze");
    }
    let report = match model {
        Model::Completion => {
            completion_report(GROUP_LABELS, &completion_input(rows), config.mc_draws, config.grid, config.seed)?
        }
        Model::Ratings => ratings_report(model, GROUP_LABELS, &ratings_dataset(rows, false)?, &config.sampler)?,
        Model::RatingsWithDropouts => {
            ratings_report(model, GROUP_LABELS, &ratings_dataset(rows, true)?, &config.sampler)?
        }
    };
    Ok(report)
}
