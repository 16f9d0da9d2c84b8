//! Ordered logistic regression on one binary covariate, fitted by adaptive
//! random-walk Metropolis-within-Gibbs.
//!
//! The likelihood depends on the data only through a 2 x K table of counts,
//! so a posterior evaluation costs O(K) regardless of sample size.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mcse::{mcse_batch_means, McseEstimate};
use crate::StatsError;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(e^x - 1)` for `x > 0`.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-probability of category `k` (1-based, `1..=c.len() + 1`) given the
/// linear predictor `eta` and strictly increasing cutpoints `c`.
pub fn ordered_logistic_log_pmf(k: usize, eta: f64, c: &[f64]) -> Result<f64, StatsError> {
    if c.is_empty() {
        return Err(StatsError::InvalidInput("need at least one cutpoint".into()));
    }
    if c.windows(2).any(|w| w[1] <= w[0]) || c.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput(format!("cutpoints must be finite and strictly increasing: {c:?}")));
    }
    let n_cat = c.len() + 1;
    if k == 0 || k > n_cat {
        return Err(StatsError::InvalidInput(format!("category {k} outside 1..={n_cat}")));
    }
    Ok(log_pmf_unchecked(k - 1, eta, c))
}

/// Zero-based category, no validation.
fn log_pmf_unchecked(k: usize, eta: f64, c: &[f64]) -> f64 {
    let last = c.len();
    if k == 0 {
        -softplus(eta - c[0])
    } else if k == last {
        -softplus(c[last - 1] - eta)
    } else {
        let a = eta - c[k - 1];
        let b = eta - c[k];
        b + ln_expm1(a - b) - softplus(a) - softplus(b)
    }
}

/// Ordinal outcomes with a binary group indicator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingsDataset {
    pub y: Vec<u8>,
    /// 1 for the treatment group, 0 for the reference group.
    pub x: Vec<u8>,
    /// Smallest and largest admissible category label.
    pub categories: (u8, u8),
}

impl RatingsDataset {
    pub fn new(y: Vec<u8>, x: Vec<u8>, categories: (u8, u8)) -> Result<Self, StatsError> {
        let d = Self { y, x, categories };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<(), StatsError> {
        let (lo, hi) = self.categories;
        if lo >= hi {
            return Err(StatsError::InvalidInput(format!("category range {lo}..={hi} is empty")));
        }
        if self.y.len() != self.x.len() {
            return Err(StatsError::InvalidInput(format!("{} outcomes but {} indicators", self.y.len(), self.x.len())));
        }
        if let Some(v) = self.y.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(StatsError::InvalidInput(format!("rating {v} outside {lo}..={hi}")));
        }
        if let Some(v) = self.x.iter().find(|v| **v > 1) {
            return Err(StatsError::InvalidInput(format!("group indicator {v} is not 0 or 1")));
        }
        Ok(())
    }

    /// `counts[g][k]` for group `g` and category offset `k`.
    pub fn counts(&self) -> [Vec<u64>; 2] {
        let width = (self.categories.1 - self.categories.0) as usize + 1;
        let mut out = [vec![0; width], vec![0; width]];
        for (&y, &x) in self.y.iter().zip(&self.x) {
            out[x as usize][(y - self.categories.0) as usize] += 1;
        }
        out
    }

    pub fn mean(&self, group: u8) -> Option<f64> {
        let ys: Vec<f64> = self.y.iter().zip(&self.x).filter(|(_, &x)| x == group).map(|(&y, _)| y as f64).collect();
        (!ys.is_empty()).then(|| ys.iter().sum::<f64>() / ys.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub prior_scale: f64,
    pub min_draws: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { chains: 4, draws: 10_000, burn_in: 2_000, seed: 20_240_101, prior_scale: 2.5, min_draws: 1_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Post-adaptation acceptance rate per chain.
    pub acceptance: Vec<f64>,
    pub beta_positive: McseEstimate,
    pub beta_negative: McseEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderedLogisticPosterior {
    pub beta_samples: Vec<f64>,
    /// Cutpoints on the latent scale between the observed categories.
    pub cutpoint_samples: Vec<Vec<f64>>,
    /// Category labels the cutpoints separate.
    pub observed_categories: Vec<u8>,
    pub diagnostics: Diagnostics,
}

impl OrderedLogisticPosterior {
    pub fn beta_mean(&self) -> f64 {
        self.beta_samples.iter().sum::<f64>() / self.beta_samples.len() as f64
    }

    pub fn beta_sd(&self) -> f64 {
        let m = self.beta_mean();
        let n = self.beta_samples.len() as f64;
        (self.beta_samples.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    pub fn beta_quantile(&self, q: f64) -> f64 {
        let mut s = self.beta_samples.clone();
        s.sort_by(f64::total_cmp);
        let idx = ((s.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
        s[idx]
    }

    pub fn cutpoint_means(&self) -> Vec<f64> {
        let n = self.cutpoint_samples.len() as f64;
        let k = self.cutpoint_samples.first().map_or(0, Vec::len);
        (0..k).map(|j| self.cutpoint_samples.iter().map(|c| c[j]).sum::<f64>() / n).collect()
    }

    pub fn prob_beta_positive(&self) -> McseEstimate {
        self.diagnostics.beta_positive
    }

    pub fn prob_beta_negative(&self) -> McseEstimate {
        self.diagnostics.beta_negative
    }
}

/// Posterior over the unconstrained vector `(beta, c1, ln(c2 - c1), ...)`.
struct Target {
    counts: [Vec<u64>; 2],
    prior_scale: f64,
}

impl Target {
    fn cutpoints(theta: &[f64]) -> Vec<f64> {
        let mut c = Vec::with_capacity(theta.len() - 1);
        let mut acc = theta[1];
        c.push(acc);
        for d in &theta[2..] {
            acc += d.exp();
            c.push(acc);
        }
        c
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let beta = theta[0];
        let c = Self::cutpoints(theta);
        if c.windows(2).any(|w| w[1] <= w[0]) || c.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut lp = -(self.prior_scale * PI).ln() - (1.0 + (beta / self.prior_scale).powi(2)).ln();
        // Jacobian of the log-difference map.
        lp += theta[2..].iter().sum::<f64>();
        for (g, row) in self.counts.iter().enumerate() {
            let eta = beta * g as f64;
            for (k, &n) in row.iter().enumerate() {
                if n > 0 {
                    lp += n as f64 * log_pmf_unchecked(k, eta, &c);
                }
            }
        }
        lp
    }

    fn initial(&self) -> Vec<f64> {
        let width = self.counts[0].len();
        let total: u64 = self.counts.iter().flatten().sum();
        let mut cum = 0u64;
        let mut c = Vec::with_capacity(width - 1);
        for k in 0..width - 1 {
            cum += self.counts[0][k] + self.counts[1][k];
            let q = (cum as f64 + 0.5) / (total as f64 + 1.0);
            c.push((q / (1.0 - q)).ln());
        }
        let mut theta = vec![0.0, c[0]];
        for w in c.windows(2) {
            theta.push((w[1] - w[0]).max(1e-3).ln());
        }
        theta
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    acceptance: f64,
}

/// Single-coordinate random-walk updates with per-axis scales tuned toward
/// 44% acceptance. Halfway through burn-in the axes switch to the columns of
/// the Cholesky factor of the covariance of the draws seen so far.
fn run_chain(target: &Target, start: Vec<f64>, config: &SamplerConfig, rng: &mut ChaCha8Rng) -> ChainOutput {
    let dim = start.len();
    let mut theta = start;
    let mut lp = target.log_density(&theta);
    let mut scales = vec![0.1; dim];
    let mut basis = DMatrix::<f64>::identity(dim, dim);
    let phase_one = config.burn_in / 2;
    let mut early: Vec<Vec<f64>> = Vec::new();
    let mut accepted_window = vec![0u32; dim];
    let window = 50;
    let mut draws = Vec::with_capacity(config.draws);
    let mut accepted = 0u64;
    let mut proposed = 0u64;

    for iter in 0..config.burn_in + config.draws {
        let sampling = iter >= config.burn_in;
        for axis in 0..dim {
            let step: f64 = rng.sample::<f64, _>(StandardNormal) * scales[axis];
            let mut proposal = theta.clone();
            for (j, p) in proposal.iter_mut().enumerate() {
                *p += basis[(j, axis)] * step;
            }
            let lp_new = target.log_density(&proposal);
            let accept = lp_new.is_finite() && rng.random::<f64>().ln() < lp_new - lp;
            if accept {
                theta = proposal;
                lp = lp_new;
                accepted_window[axis] += 1;
            }
            if sampling {
                proposed += 1;
                accepted += accept as u64;
            }
        }
        if !sampling && (iter + 1) % window == 0 {
            for axis in 0..dim {
                let rate = accepted_window[axis] as f64 / window as f64;
                let adj = if rate > 0.44 { 1.2 } else { 1.0 / 1.2 };
                scales[axis] = (scales[axis] * adj).clamp(1e-4, 50.0);
                accepted_window[axis] = 0;
            }
        }
        if !sampling && iter >= phase_one / 2 && iter < phase_one {
            early.push(theta.clone());
        }
        if !sampling && iter + 1 == phase_one && early.len() > dim * 4 {
            if let Some(l) = covariance_cholesky(&early) {
                basis = l;
                scales = vec![1.0; dim];
            }
        }
        if sampling {
            draws.push(theta.clone());
        }
    }
    ChainOutput { draws, acceptance: accepted as f64 / proposed.max(1) as f64 }
}

fn covariance_cholesky(samples: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let dim = samples[0].len();
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DVector::<f64>::zeros(dim), |acc, s| acc + DVector::from_column_slice(s)) / n;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for s in samples {
        let d = DVector::from_column_slice(s) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    for i in 0..dim {
        cov[(i, i)] += 1e-8;
    }
    cov.cholesky().map(|c| c.l())
}

/// Fits `y ~ ordered_logistic(x * beta, c)` with `beta ~ Cauchy(0, prior_scale)`
/// and a flat prior on increasing cutpoints.
///
/// Categories absent from both groups are dropped before fitting: under a
/// flat cutpoint prior an empty end category leaves its cutpoint unbounded.
pub fn fit_ordered_logistic(
    data: &RatingsDataset,
    config: &SamplerConfig,
) -> Result<OrderedLogisticPosterior, StatsError> {
    data.check()?;
    if config.chains == 0 || config.draws < config.min_draws {
        return Err(StatsError::InvalidInput(format!(
            "need at least one chain and {} draws per chain",
            config.min_draws
        )));
    }
    if !(config.prior_scale > 0.0) {
        return Err(StatsError::InvalidInput("prior scale must be positive".into()));
    }
    let full = data.counts();
    if full.iter().any(|row| row.iter().sum::<u64>() == 0) {
        return Err(StatsError::InvalidInput("both groups need at least one observation".into()));
    }
    let keep: Vec<usize> = (0..full[0].len()).filter(|&k| full[0][k] + full[1][k] > 0).collect();
    if keep.len() < 2 {
        return Err(StatsError::InvalidInput("need at least two distinct categories".into()));
    }
    let counts = [
        keep.iter().map(|&k| full[0][k]).collect::<Vec<_>>(),
        keep.iter().map(|&k| full[1][k]).collect::<Vec<_>>(),
    ];
    let target = Target { counts, prior_scale: config.prior_scale };
    let start = target.initial();

    let outputs: Vec<ChainOutput> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|chain| {
                let target = &target;
                let mut init = start.clone();
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(chain as u64);
                    for v in init.iter_mut() {
                        *v += rng.random_range(-0.3..0.3);
                    }
                    run_chain(target, init, config, &mut rng)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });

    let acceptance: Vec<f64> = outputs.iter().map(|o| o.acceptance).collect();
    if let Some(bad) = acceptance.iter().find(|a| !(0.05..=0.95).contains(*a)) {
        return Err(StatsError::NonConvergence(format!("acceptance rate {bad:.3} outside [0.05, 0.95]")));
    }
    let positive: Vec<Vec<bool>> = outputs.iter().map(|o| o.draws.iter().map(|t| t[0] > 0.0).collect()).collect();
    let negative: Vec<Vec<bool>> = outputs.iter().map(|o| o.draws.iter().map(|t| t[0] < 0.0).collect()).collect();
    let beta_samples = outputs.iter().flat_map(|o| o.draws.iter().map(|t| t[0])).collect();
    let cutpoint_samples = outputs.iter().flat_map(|o| o.draws.iter().map(|t| Target::cutpoints(t))).collect();
    Ok(OrderedLogisticPosterior {
        beta_samples,
        cutpoint_samples,
        observed_categories: keep.iter().map(|&k| data.categories.0 + k as u8).collect(),
        diagnostics: Diagnostics {
            acceptance,
            beta_positive: mcse_batch_means(&positive),
            beta_negative: mcse_batch_means(&negative),
        },
    })
}

/// Draws one rating from the model; used to build synthetic datasets.
pub fn sample_rating<R: Rng + ?Sized>(eta: f64, c: &[f64], lowest: u8, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut k = 0;
    while k < c.len() && u >= logistic(c[k] - eta) {
        k += 1;
    }
    lowest + k as u8
}
