//! Uncertainty labels, minimum simulation counts, temperature-scaled
//! confidence and checkpoint selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcts::SearchTrace;

/// Reward of `policy` measured with the final action values.
pub fn approx_reward(policy: &[f64], q_final: &[f64]) -> Result<f64> {
    if policy.len() != q_final.len() {
        return Err(Error::Shape(format!("policy has {} actions, Q has {}", policy.len(), q_final.len())));
    }
    Ok(policy.iter().zip(q_final).map(|(p, q)| p * q).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyLabel {
    pub n_max: usize,
    pub epsilon: f64,
    /// `R(s, n)` for `n = 1..=n_max` (index `n − 1`).
    pub rewards: Vec<f64>,
    /// Minimum simulation count: the smallest `n` with `U(s, n) = 0`.
    pub min_sims: usize,
    /// Visit distribution (τ = 1) after `n_max` simulations.
    pub final_policy: Vec<f64>,
    /// Action values after `n_max` simulations, −1 if unvisited.
    pub final_q: Vec<f64>,
}

impl UncertaintyLabel {
    /// `U(s, n)`: 1 while `n < M(s)`.
    pub fn uncertain(&self, n: usize) -> bool {
        n < self.min_sims
    }

    pub fn u_series(&self) -> Vec<u8> {
        (1..=self.n_max).map(|n| self.uncertain(n) as u8).collect()
    }
}

/// Labels a trace of at least `n_max` simulations with a single backward
/// pass over the greedy-policy rewards: `U(s, n) = 1` iff
/// `R(n_max) − min_{n ≤ n' ≤ n_max} R(n') ≥ ε`.
pub fn labels_from_trace(trace: &SearchTrace, n_max: usize, epsilon: f64) -> Result<UncertaintyLabel> {
    if epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon {epsilon} must be positive")));
    }
    if n_max == 0 || trace.simulations() < n_max {
        return Err(Error::Range(format!("trace has {} simulations, need {n_max}", trace.simulations())));
    }
    let final_stats = trace.stats_at(n_max)?;
    let final_q = final_stats.q_values();
    let best = trace.best_action_series(n_max)?;
    // One-hot greedy policy: R(s, n) = Q_final(best_n).
    let rewards: Vec<f64> = best.iter().map(|&a| final_q[a]).collect();
    let target = rewards[n_max - 1];
    let mut suffix_min = f64::INFINITY;
    let mut min_sims = n_max;
    for n in (1..=n_max).rev() {
        suffix_min = suffix_min.min(rewards[n - 1]);
        if target - suffix_min >= epsilon {
            break;
        }
        min_sims = n;
    }
    let final_policy = trace.root_policy(n_max, 1.0)?;
    Ok(UncertaintyLabel { n_max, epsilon, rewards, min_sims, final_policy, final_q })
}

/// `1 − max_a p(a)^{1/τ} / Σ p(a')^{1/τ}`, evaluated in log space.
pub fn calibrated_uncertainty(prior: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature {tau} must be positive")));
    }
    let logs: Vec<f64> = prior.iter().filter(|&&p| p > 0.0).map(|&p| p.ln() / tau).collect();
    if logs.is_empty() {
        return Err(Error::Range("prior has no positive mass".into()));
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logs.iter().map(|&l| (l - max).exp()).sum();
    Ok(1.0 - 1.0 / denom)
}

/// Empirical distribution of minimum simulation counts.
#[derive(Clone, Debug, PartialEq)]
pub struct MinSimDistribution {
    n_max: usize,
    /// `below[n]` = number of samples with `M < n`, for `n = 0..=n_max + 1`.
    below: Vec<usize>,
    total: usize,
}

impl MinSimDistribution {
    pub fn new(samples: &[usize], n_max: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Degenerate("empty minimum-simulation sample".into()));
        }
        let mut hist = vec![0usize; n_max + 2];
        for &m in samples {
            if m == 0 || m > n_max {
                return Err(Error::Range(format!("minimum simulation count {m} outside 1..={n_max}")));
            }
            hist[m] += 1;
        }
        let mut below = vec![0usize; n_max + 2];
        for n in 1..n_max + 2 {
            below[n] = below[n - 1] + hist[n - 1];
        }
        Ok(MinSimDistribution { n_max, below, total: samples.len() })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `p(M < n)`.
    pub fn p_below(&self, n: usize) -> f64 {
        self.below[n.min(self.n_max + 1)] as f64 / self.total as f64
    }
}

/// Expected simulations with one check at `n` whose negatives are
/// recovered with accuracy `alpha`:
/// `(nα + N(1 − α))·p(M < n) + N·p(M ≥ n)`.
pub fn expected_cost(alpha: f64, n: usize, dist: &MinSimDistribution) -> f64 {
    let n_max = dist.n_max as f64;
    let below = dist.p_below(n);
    (n as f64 * alpha + n_max * (1.0 - alpha)) * below + n_max * (1.0 - below)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointChoice {
    pub n_star: usize,
    /// `f(1, n)` for `n = 1..=n_max` (index `n − 1`).
    pub f_values: Vec<f64>,
    /// Sample counts per minimum simulation count, index `m`.
    pub histogram: Vec<usize>,
}

/// Linear scan of `f(1, n)` over `n = 1..=n_max`, lowest `n` on ties.
pub fn choose_checkpoint(samples: &[usize], n_max: usize) -> Result<CheckpointChoice> {
    let dist = MinSimDistribution::new(samples, n_max)?;
    let f_values: Vec<f64> = (1..=n_max).map(|n| expected_cost(1.0, n, &dist)).collect();
    // f(1, n) = N − (N − n)·p(M < n); the argmin is taken on the integer
    // gain so that exact ties resolve to the lowest n.
    let gain = |n: usize| (n_max - n) as u128 * dist.below[n] as u128;
    let mut n_star = 1;
    for n in 2..=n_max {
        if gain(n) > gain(n_star) {
            n_star = n;
        }
    }
    let mut histogram = vec![0usize; n_max + 1];
    for &m in samples {
        histogram[m] += 1;
    }
    Ok(CheckpointChoice { n_star, f_values, histogram })
}

/// Doubling schedule `c = [0, n*, 2n*, 4n*, …]` kept below `n_max`.
pub fn doubling_checkpoints(n_star: usize, n_max: usize) -> Vec<usize> {
    let mut c = vec![0];
    let mut n = n_star.max(1);
    while n < n_max {
        c.push(n);
        n *= 2;
    }
    c
}
