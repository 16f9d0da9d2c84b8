//! Monte Carlo standard errors for probability estimates.

use serde::{Deserialize, Serialize};

/// MCSE of a proportion estimated from `n` independent draws.
pub fn mcse_independent(p: f64, n: usize) -> f64 {
    if n == 0 || p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McseEstimate {
    pub p: f64,
    pub mcse: f64,
    pub n: usize,
    pub n_eff: f64,
}

/// Proportion of `true` across chains with a batch-means MCSE.
///
/// Batches of `floor(sqrt(n))` draws are formed within each chain so no
/// batch straddles two chains. The effective sample size never exceeds the
/// number of draws.
pub fn mcse_batch_means(chains: &[Vec<bool>]) -> McseEstimate {
    let n: usize = chains.iter().map(Vec::len).sum();
    if n == 0 {
        return McseEstimate { p: 0.0, mcse: 0.0, n: 0, n_eff: 0.0 };
    }
    let p = chains.iter().flatten().filter(|&&b| b).count() as f64 / n as f64;
    let naive_var = p * (1.0 - p);
    if naive_var == 0.0 {
        return McseEstimate { p, mcse: 0.0, n, n_eff: n as f64 };
    }
    let shortest = chains.iter().map(Vec::len).filter(|&l| l > 0).min().unwrap_or(0);
    let size = ((shortest as f64).sqrt().floor() as usize).max(1);
    let means: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.chunks_exact(size))
        .map(|b| b.iter().filter(|&&x| x).count() as f64 / size as f64)
        .collect();
    if means.len() < 2 {
        return McseEstimate { p, mcse: mcse_independent(p, n), n, n_eff: n as f64 };
    }
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var_means = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    let asymptotic = (size as f64 * var_means).max(naive_var);
    let n_eff = (n as f64 * naive_var / asymptotic).min(n as f64);
    McseEstimate { p, mcse: (naive_var / n_eff).sqrt(), n, n_eff }
}
