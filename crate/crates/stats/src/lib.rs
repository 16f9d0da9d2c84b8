//! Bayesian comparison of two experiment groups: Beta-Bernoulli completion
//! rates and ordered logistic regression of ratings, with Monte Carlo
//! standard errors on every reported probability.

use thiserror::Error;

pub mod beta;
pub mod mcse;
pub mod ordinal;
pub mod report;

pub use beta::{bernoulli_posterior, prob_greater, BetaPosterior, Estimate, ProbMethod};
pub use mcse::{mcse_batch_means, mcse_independent, McseEstimate};
pub use ordinal::{fit_ordered_logistic, ordered_logistic_log_pmf, OrderedLogisticPosterior, RatingsDataset, SamplerConfig};
pub use report::{completion_report, ratings_report, Model, ProbStatement, Report};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sampler did not converge: {0}")]
    NonConvergence(String),
}
