//! Network input encoders.
//!
//! Board planes (side-to-move perspective): own stones, opponent stones,
//! legal-move mask, constant ones.
//!
//! Tree planes `T(s, n)` describe the root's children after `n`
//! simulations and never encode `n` itself:
//!
//! | ch | content |
//! |----|---------|
//! | 0  | prior `p(a|s)` |
//! | 1  | visit share `N(a)/ΣN` (τ = 1) |
//! | 2  | mean value `Q(a)`, −1 if unvisited |
//! | 3  | population std of backed-up values, 1 if unvisited |
//! | 4  | latest-half policy `2·π(n) − π(⌊n/2⌋)` |
//! | 5  | mean value over simulations in `(⌊n/2⌋, n]`, −1 if none |
//! | 6  | value std over the same window, 1 if none |

use crate::error::{Error, Result};
use crate::game::GameState;
use crate::mcts::{policy_from_counts, SearchTrace};
use crate::tensor::Tensor;

pub const STATE_CHANNELS: usize = 4;
pub const MCTS_CHANNELS: usize = 7;

pub fn state_features(state: &GameState) -> Tensor {
    let size = state.size();
    let area = size * size;
    let mut t = Tensor::zeros(&[STATE_CHANNELS, size, size]);
    let me = state.to_move();
    let own = state.stones(me);
    let opp = state.stones(me.opponent());
    let data = t.data_mut();
    for i in 0..area {
        if own >> i & 1 == 1 {
            data[i] = 1.0;
        }
        if opp >> i & 1 == 1 {
            data[area + i] = 1.0;
        }
    }
    for i in state.legal_indices() {
        data[2 * area + i] = 1.0;
    }
    data[3 * area..].fill(1.0);
    t
}

/// Per-action population mean/std of the values in `pairs`.
fn value_moments(pairs: &[(u16, f64)], actions: usize) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
    let mut counts = vec![0u32; actions];
    let mut sums = vec![0.0; actions];
    for &(a, v) in pairs {
        counts[a as usize] += 1;
        sums[a as usize] += v;
    }
    let means: Vec<f64> = counts
        .iter()
        .zip(&sums)
        .map(|(&n, &w)| if n == 0 { -1.0 } else { w / n as f64 })
        .collect();
    let mut sq = vec![0.0; actions];
    for &(a, v) in pairs {
        let d = v - means[a as usize];
        sq[a as usize] += d * d;
    }
    let stds = counts
        .iter()
        .zip(&sq)
        .map(|(&n, &s)| if n == 0 { 1.0 } else { (s / n as f64).sqrt() })
        .collect();
    (counts, means, stds)
}

/// Visit shares after `n` simulations; one-hot prior argmax before any visit.
fn visit_policy(counts: &[u32], trace: &SearchTrace) -> Vec<f64> {
    policy_from_counts(counts, 1.0, trace.prior_argmax())
}

/// Tree features after `n` simulations, rebuilt from the compact trace.
pub fn mcts_features(trace: &SearchTrace, n: usize) -> Result<Tensor> {
    if n < 2 || n > trace.simulations() {
        return Err(Error::Range(format!("tree features need 2 ≤ n ≤ {}, got {n}", trace.simulations())));
    }
    let size = trace.root.size();
    let area = size * size;
    let half = n / 2;
    let all = &trace.pairs[..n - 1];
    let recent = &trace.pairs[half.saturating_sub(1)..n - 1];
    let (counts, q, std) = value_moments(all, area);
    let (_, q_recent, std_recent) = value_moments(recent, area);
    let half_counts = trace.stats_window(0, half).counts;

    let mut t = Tensor::zeros(&[MCTS_CHANNELS, size, size]);
    t.plane_mut(0).copy_from_slice(&trace.priors);
    let pi = visit_policy(&counts, trace);
    let pi_half = visit_policy(&half_counts, trace);
    t.plane_mut(1).copy_from_slice(&pi);
    t.plane_mut(2).copy_from_slice(&q);
    t.plane_mut(3).copy_from_slice(&std);
    for (o, (a, b)) in t.plane_mut(4).iter_mut().zip(pi.iter().zip(&pi_half)) {
        *o = 2.0 * a - b;
    }
    t.plane_mut(5).copy_from_slice(&q_recent);
    t.plane_mut(6).copy_from_slice(&std_recent);
    Ok(t)
}

/// Channels 0–2 and 4 from stored live-tree snapshots instead of the pair
/// replay. Used to cross-check [`mcts_features`].
pub fn mcts_features_from_snapshots(trace: &SearchTrace, n: usize) -> Result<Tensor> {
    let snaps = trace
        .snapshots
        .as_ref()
        .ok_or_else(|| Error::Range("trace has no stored snapshots".into()))?;
    if n < 2 || n > snaps.len() {
        return Err(Error::Range(format!("snapshot {n} outside 2..={}", snaps.len())));
    }
    let size = trace.root.size();
    let full = &snaps[n - 1];
    let half = &snaps[n / 2 - 1];
    let mut t = Tensor::zeros(&[MCTS_CHANNELS, size, size]);
    t.plane_mut(0).copy_from_slice(&trace.priors);
    let pi = visit_policy(&full.counts, trace);
    let pi_half = visit_policy(&half.counts, trace);
    t.plane_mut(1).copy_from_slice(&pi);
    t.plane_mut(2).copy_from_slice(&full.q_values());
    for (o, (a, b)) in t.plane_mut(4).iter_mut().zip(pi.iter().zip(&pi_half)) {
        *o = 2.0 * a - b;
    }
    Ok(t)
}

/// Image of cell `idx` under board symmetry `k` (0..8: four rotations,
/// each optionally mirrored).
pub fn symmetry_index(k: u8, idx: usize, size: usize) -> usize {
    let (r, c) = (idx / size, idx % size);
    let m = size - 1;
    let (r, c) = match k & 3 {
        0 => (r, c),
        1 => (c, m - r),
        2 => (m - r, m - c),
        _ => (m - c, r),
    };
    let c = if k & 4 != 0 { m - c } else { c };
    r * size + c
}

/// Moves every per-cell entry of `v` to its image under symmetry `k`.
pub fn transform_cells(v: &[f64], k: u8, size: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, &x) in v.iter().enumerate() {
        out[symmetry_index(k, i, size)] = x;
    }
    out
}

/// Applies symmetry `k` to each plane of a `[channels, size, size]` tensor.
pub fn transform_planes(t: &Tensor, k: u8) -> Tensor {
    let size = t.shape()[1];
    let mut out = Tensor::zeros(t.shape());
    for ch in 0..t.shape()[0] {
        out.plane_mut(ch).copy_from_slice(&transform_cells(t.plane(ch), k, size));
    }
    out
}
