//! Beta-Bernoulli completion model and comparison of two Beta posteriors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::mcse::mcse_independent;
use crate::StatsError;

pub const MIN_MC_DRAWS: usize = 1_000;
pub const MIN_GRID: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, StatsError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(StatsError::InvalidInput(format!("Beta({alpha}, {beta}) needs positive finite parameters")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        xlny(self.alpha - 1.0, x) + xlny(self.beta - 1.0, 1.0 - x) - ln_beta(self.alpha, self.beta)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, x)
        }
    }
}

/// `a * ln(y)` with `0 * ln(0) = 0`.
fn xlny(a: f64, y: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * y.ln()
    }
}

/// Conjugate update of a uniform prior on the success probability.
pub fn bernoulli_posterior(successes: u64, trials: u64) -> Result<BetaPosterior, StatsError> {
    if successes > trials {
        return Err(StatsError::InvalidInput(format!("{successes} successes out of {trials} trials")));
    }
    BetaPosterior::new(1.0 + successes as f64, 1.0 + (trials - successes) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbMethod {
    MonteCarlo { n: usize, seed: u64 },
    /// Composite Simpson rule on `grid` intervals over (0, 1).
    NumericIntegration { grid: usize },
}

/// A probability together with its uncertainty.
///
/// For Monte Carlo estimates `error` is the MCSE; for quadrature it bounds
/// the discretization error by comparing against the half-resolution rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p: f64,
    pub error: f64,
}

/// `P(theta_a > theta_b)` for independent Beta posteriors.
pub fn prob_greater(a: &BetaPosterior, b: &BetaPosterior, method: ProbMethod) -> Result<Estimate, StatsError> {
    match method {
        ProbMethod::MonteCarlo { n, seed } => {
            if n < MIN_MC_DRAWS {
                return Err(StatsError::InvalidInput(format!("need at least {MIN_MC_DRAWS} draws, got {n}")));
            }
            let da = Beta::new(a.alpha, a.beta).map_err(|e| StatsError::InvalidInput(e.to_string()))?;
            let db = Beta::new(b.alpha, b.beta).map_err(|e| StatsError::InvalidInput(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let wins = (0..n).filter(|_| da.sample(&mut rng) > db.sample(&mut rng)).count();
            let p = wins as f64 / n as f64;
            Ok(Estimate { p, error: mcse_independent(p, n) })
        }
        ProbMethod::NumericIntegration { grid } => {
            if grid < MIN_GRID {
                return Err(StatsError::InvalidInput(format!("grid needs at least {MIN_GRID} intervals, got {grid}")));
            }
            let grid = grid.div_ceil(4) * 4;
            let f = |x: f64| a.pdf(x) * b.cdf(x);
            let ys: Vec<f64> = (0..=grid).map(|i| f(i as f64 / grid as f64)).collect();
            let fine = simpson(&ys, 1.0 / grid as f64);
            let coarse: Vec<f64> = ys.iter().step_by(2).copied().collect();
            let rough = simpson(&coarse, 2.0 / grid as f64);
            Ok(Estimate { p: fine.clamp(0.0, 1.0), error: (fine - rough).abs() })
        }
    }
}

fn simpson(ys: &[f64], h: f64) -> f64 {
    let n = ys.len() - 1;
    let mut s = ys[0] + ys[n];
    for (i, y) in ys.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * y } else { 2.0 * y };
    }
    s * h / 3.0
}
