//! JSON reports combining counts, posterior summaries and probability
//! statements.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::beta::{bernoulli_posterior, prob_greater, ProbMethod};
use crate::ordinal::{fit_ordered_logistic, RatingsDataset, SamplerConfig};
use crate::StatsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Completion,
    Ratings,
    RatingsWithDropouts,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Completion => "completion",
            Model::Ratings => "ratings",
            Model::RatingsWithDropouts => "ratings_with_dropouts",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbStatement {
    pub claim: String,
    pub p: f64,
    pub mcse: f64,
}

/// Comparison of an estimate against an externally supplied value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub claim: String,
    pub reference_p: f64,
    pub observed_p: f64,
    pub tolerance: f64,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: Model,
    /// Treatment group first, reference group second.
    pub groups: [String; 2],
    pub counts: Value,
    pub posterior_summary: Value,
    pub prob_statements: Vec<ProbStatement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_checks: Vec<ReferenceCheck>,
}

impl Report {
    pub fn statement(&self, claim: &str) -> Option<&ProbStatement> {
        self.prob_statements.iter().find(|s| s.claim == claim)
    }

    /// Adds a check of `claim` against `reference_p`; unknown claims are an error.
    pub fn check_against(&mut self, claim: &str, reference_p: f64, tolerance: f64) -> Result<&ReferenceCheck, StatsError> {
        let observed = self
            .statement(claim)
            .ok_or_else(|| StatsError::InvalidInput(format!("no statement named {claim:?}")))?
            .p;
        self.reference_checks.push(ReferenceCheck {
            claim: claim.to_string(),
            reference_p,
            observed_p: observed,
            tolerance,
            consistent: (observed - reference_p).abs() <= tolerance,
        });
        Ok(self.reference_checks.last().expect("just pushed"))
    }

    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}  ({} vs {})", self.model.as_str(), self.groups[0], self.groups[1]);
        let width = self.prob_statements.iter().map(|s| s.claim.len()).max().unwrap_or(0).max(5);
        let _ = writeln!(out, "{:<width$} {:>8} {:>8}", "claim", "p", "mcse");
        for s in &self.prob_statements {
            let _ = writeln!(out, "{:<width$} {:>8.4} {:>8.4}", s.claim, s.p, s.mcse);
        }
        for c in &self.reference_checks {
            let verdict = if c.consistent { "consistent" } else { "DISCREPANCY" };
            let _ = writeln!(
                out,
                "check {} reference {:.2} observed {:.4} {}",
                c.claim, c.reference_p, c.observed_p, verdict
            );
        }
        out
    }
}

/// Successes and trials of one group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub successes: u64,
    pub trials: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionInput {
    pub treatment_all: Tally,
    pub reference_all: Tally,
    pub treatment_first: Tally,
    pub reference_first: Tally,
}

pub const ALL_LEVELS_CLAIM: &str = "completion rate higher for treatment, all levels";
pub const FIRST_LEVEL_CLAIM: &str = "completion rate higher for treatment, first level";
pub const BETA_POSITIVE_CLAIM: &str = "beta > 0";
pub const BETA_NEGATIVE_CLAIM: &str = "beta < 0";

/// Beta-Bernoulli comparison on all started levels and on first levels only.
pub fn completion_report(
    groups: [&str; 2],
    input: &CompletionInput,
    mc_draws: usize,
    grid: usize,
    seed: u64,
) -> Result<Report, StatsError> {
    let mut statements = Vec::new();
    let mut summary = serde_json::Map::new();
    for (claim, key, t, r) in [
        (ALL_LEVELS_CLAIM, "all_levels", input.treatment_all, input.reference_all),
        (FIRST_LEVEL_CLAIM, "first_level", input.treatment_first, input.reference_first),
    ] {
        let a = bernoulli_posterior(t.successes, t.trials)?;
        let b = bernoulli_posterior(r.successes, r.trials)?;
        let mc = prob_greater(&a, &b, ProbMethod::MonteCarlo { n: mc_draws, seed })?;
        let quad = prob_greater(&a, &b, ProbMethod::NumericIntegration { grid })?;
        summary.insert(
            key.to_string(),
            json!({
                groups[0]: { "alpha": a.alpha, "beta": a.beta, "mean": a.mean() },
                groups[1]: { "alpha": b.alpha, "beta": b.beta, "mean": b.mean() },
                "p_numeric": quad.p,
                "p_numeric_error": quad.error,
            }),
        );
        statements.push(ProbStatement { claim: claim.to_string(), p: mc.p, mcse: mc.error });
    }
    Ok(Report {
        model: Model::Completion,
        groups: [groups[0].to_string(), groups[1].to_string()],
        counts: json!({
            "all_levels": { groups[0]: input.treatment_all, groups[1]: input.reference_all },
            "first_level": { groups[0]: input.treatment_first, groups[1]: input.reference_first },
        }),
        posterior_summary: Value::Object(summary),
        prob_statements: statements,
        reference_checks: Vec::new(),
    })
}

/// Ordered-logit comparison of ratings; `x = 1` marks the treatment group.
pub fn ratings_report(
    model: Model,
    groups: [&str; 2],
    data: &RatingsDataset,
    config: &SamplerConfig,
) -> Result<Report, StatsError> {
    let post = fit_ordered_logistic(data, config)?;
    let counts = data.counts();
    let labels: Vec<String> = (data.categories.0..=data.categories.1).map(|c| c.to_string()).collect();
    let table = |row: &Vec<u64>| -> Value {
        Value::Object(labels.iter().cloned().zip(row.iter().map(|&n| json!(n))).collect())
    };
    let pos = post.prob_beta_positive();
    let neg = post.prob_beta_negative();
    Ok(Report {
        model,
        groups: [groups[0].to_string(), groups[1].to_string()],
        counts: json!({
            groups[0]: { "n": counts[1].iter().sum::<u64>(), "mean": data.mean(1), "by_rating": table(&counts[1]) },
            groups[1]: { "n": counts[0].iter().sum::<u64>(), "mean": data.mean(0), "by_rating": table(&counts[0]) },
        }),
        posterior_summary: json!({
            "beta": {
                "mean": post.beta_mean(),
                "sd": post.beta_sd(),
                "q025": post.beta_quantile(0.025),
                "q500": post.beta_quantile(0.5),
                "q975": post.beta_quantile(0.975),
            },
            "cutpoints_mean": post.cutpoint_means(),
            "observed_categories": post.observed_categories,
            "draws": post.beta_samples.len(),
            "chains": config.chains,
            "acceptance": post.diagnostics.acceptance,
            "n_eff_beta_positive": pos.n_eff,
        }),
        prob_statements: vec![
            ProbStatement { claim: BETA_POSITIVE_CLAIM.into(), p: pos.p, mcse: pos.mcse },
            ProbStatement { claim: BETA_NEGATIVE_CLAIM.into(), p: neg.p, mcse: neg.mcse },
        ],
        reference_checks: Vec::new(),
    })
}
