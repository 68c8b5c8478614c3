//! Policy-value MCTS with PUCT selection.
//!
//! The first simulation only evaluates the root. Every later simulation
//! descends by PUCT, expands one leaf, evaluates it and backs the value up
//! the path. The search records a compact [`SearchTrace`]: root priors plus
//! one `(a_i, v_i)` pair per simulation `i ≥ 2`, where `a_i` is the root
//! action taken and `v_i` the leaf value seen from the root player. Root
//! visit counts and action values after any `n` are rebuilt from a prefix
//! of the pairs.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::features::state_features;
use crate::game::GameState;
use crate::nn::Network;

/// Network output consumed by the search.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Non-negative weights over all `size²` cells; masked to legal moves
    /// and renormalised by the search.
    pub priors: Vec<f64>,
    /// Value for the side to move, in `[-1, 1]`.
    pub value: f64,
}

pub trait Evaluator {
    fn evaluate(&self, state: &GameState) -> Evaluation;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, state: &GameState) -> Evaluation {
        (**self).evaluate(state)
    }
}

impl Evaluator for Network {
    fn evaluate(&self, state: &GameState) -> Evaluation {
        let pred = self
            .forward(&state_features(state), None)
            .expect("policy-value net must match the board and take board planes only");
        Evaluation { priors: pred.policy, value: pred.v }
    }
}

/// Uniform priors and a zero value.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, state: &GameState) -> Evaluation {
        Evaluation { priors: vec![1.0; state.num_cells()], value: 0.0 }
    }
}

/// Uniform priors; value is the mean result of random playouts. The
/// playout RNG is keyed by `(seed, position hash)`, so evaluation is a
/// pure function of the position.
#[derive(Clone, Copy, Debug)]
pub struct RolloutEvaluator {
    pub playouts: usize,
    pub seed: u64,
}

impl Evaluator for RolloutEvaluator {
    fn evaluate(&self, state: &GameState) -> Evaluation {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ state.position_hash());
        let me = state.to_move();
        let mut total = 0.0;
        for _ in 0..self.playouts.max(1) {
            let mut s = *state;
            loop {
                let moves = s.legal_indices();
                if moves.is_empty() {
                    break;
                }
                let idx = moves[rng.random_range(0..moves.len())];
                s = s.play_index(idx).expect("legal index");
            }
            total += if s.to_move() == me { -1.0 } else { 1.0 };
        }
        Evaluation { priors: vec![1.0; state.num_cells()], value: total / self.playouts.max(1) as f64 }
    }
}

/// Memoises a deterministic evaluator by position hash.
pub struct CachedEvaluator<E> {
    inner: E,
    cache: RefCell<HashMap<u64, Evaluation>>,
    capacity: usize,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E, capacity: usize) -> Self {
        CachedEvaluator { inner, cache: RefCell::new(HashMap::new()), capacity }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&self, state: &GameState) -> Evaluation {
        let key = state.position_hash();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return hit.clone();
        }
        let eval = self.inner.evaluate(state);
        let mut cache = self.cache.borrow_mut();
        if cache.len() >= self.capacity {
            cache.clear();
        }
        cache.insert(key, eval.clone());
        eval
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletNoise {
    /// Concentration is `alpha_scale / legal moves`.
    pub alpha_scale: f64,
    pub weight: f64,
}

impl Default for DirichletNoise {
    fn default() -> Self {
        DirichletNoise { alpha_scale: 10.0, weight: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchConfig {
    pub c_puct: f64,
    pub noise: Option<DirichletNoise>,
    /// Also store the live tree's root counts after every simulation.
    pub record_snapshots: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { c_puct: 1.5, noise: None, record_snapshots: false }
    }
}

/// Root visit counts and value sums, indexed by cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RootStats {
    pub counts: Vec<u32>,
    pub sums: Vec<f64>,
}

impl RootStats {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Mean backed-up value; `-1` for unvisited actions.
    pub fn q_values(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.sums)
            .map(|(&n, &w)| if n == 0 { -1.0 } else { w / n as f64 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchTrace {
    pub root: GameState,
    /// Root priors after masking (and noise, if any); zero off the legal set.
    pub priors: Vec<f64>,
    /// Raw network value of the root for the side to move.
    pub root_value: f64,
    /// `(a_i, v_i)` for simulations `i = 2..=n`.
    pub pairs: Vec<(u16, f64)>,
    /// Live-tree root stats after each simulation, when requested.
    pub snapshots: Option<Vec<RootStats>>,
}

impl SearchTrace {
    pub fn simulations(&self) -> usize {
        if self.priors.is_empty() {
            0
        } else {
            self.pairs.len() + 1
        }
    }

    pub fn num_actions(&self) -> usize {
        self.priors.len()
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.simulations() {
            return Err(Error::Range(format!("simulation {n} outside 1..={}", self.simulations())));
        }
        Ok(())
    }

    /// Root stats after `n` simulations, rebuilt from the first `n − 1` pairs.
    pub fn stats_at(&self, n: usize) -> Result<RootStats> {
        self.check_n(n)?;
        Ok(self.stats_window(0, n))
    }

    /// Stats over simulations `i` with `from < i ≤ to` (simulation 1 has no pair).
    pub fn stats_window(&self, from: usize, to: usize) -> RootStats {
        let a = self.num_actions();
        let mut counts = vec![0u32; a];
        let mut sums = vec![0.0; a];
        let lo = from.saturating_sub(1);
        let hi = to.saturating_sub(1).min(self.pairs.len());
        for &(action, v) in &self.pairs[lo.min(hi)..hi] {
            counts[action as usize] += 1;
            sums[action as usize] += v;
        }
        RootStats { counts, sums }
    }

    pub fn prior_argmax(&self) -> usize {
        argmax_lowest(&self.priors)
    }

    /// Most-visited action after `n` simulations, lowest index on ties;
    /// the prior argmax when nothing has been visited.
    pub fn best_action(&self, n: usize) -> Result<usize> {
        let stats = self.stats_at(n)?;
        Ok(best_from_counts(&stats.counts).unwrap_or_else(|| self.prior_argmax()))
    }

    /// Best action after each `n = 1..=upto`, computed incrementally.
    pub fn best_action_series(&self, upto: usize) -> Result<Vec<usize>> {
        self.check_n(upto)?;
        let mut counts = vec![0u32; self.num_actions()];
        let mut best = self.prior_argmax();
        let mut out = Vec::with_capacity(upto);
        out.push(best);
        let mut any = false;
        for &(a, _) in &self.pairs[..upto - 1] {
            let a = a as usize;
            counts[a] += 1;
            if !any || counts[a] > counts[best] || (counts[a] == counts[best] && a < best) {
                best = a;
                any = true;
            }
            out.push(best);
        }
        Ok(out)
    }

    /// `π(a) ∝ N(a)^{1/τ}` after `n` simulations; `tau == 0` is the τ→0⁺
    /// limit (one-hot on [`best_action`](Self::best_action)). With no
    /// visits the policy is one-hot on the prior argmax.
    pub fn root_policy(&self, n: usize, tau: f64) -> Result<Vec<f64>> {
        let stats = self.stats_at(n)?;
        Ok(policy_from_counts(&stats.counts, tau, self.prior_argmax()))
    }
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn best_from_counts(counts: &[u32]) -> Option<usize> {
    let mut best = None;
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|b: usize| c > counts[b]) {
            best = Some(i);
        }
    }
    best
}

/// Visit-count policy with temperature; see [`SearchTrace::root_policy`].
pub fn policy_from_counts(counts: &[u32], tau: f64, fallback: usize) -> Vec<f64> {
    let mut out = vec![0.0; counts.len()];
    let Some(best) = best_from_counts(counts) else {
        out[fallback] = 1.0;
        return out;
    };
    if tau <= 0.0 {
        out[best] = 1.0;
        return out;
    }
    let max = counts[best] as f64;
    let inv = 1.0 / tau;
    for (o, &c) in out.iter_mut().zip(counts) {
        if c > 0 {
            *o = ((c as f64 / max).ln() * inv).exp();
        }
    }
    let sum: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}

#[derive(Clone, Debug)]
struct Edge {
    action: u16,
    prior: f64,
    visits: u32,
    value_sum: f64,
    child: Option<u32>,
}

#[derive(Clone, Debug)]
struct Node {
    state: GameState,
    terminal: bool,
    edges: Vec<Edge>,
}

/// Masks priors to the legal set and renormalises; uniform if the legal
/// mass is zero.
fn legal_priors(state: &GameState, raw: &[f64]) -> Vec<(usize, f64)> {
    let legal = state.legal_indices();
    let mass: f64 = legal.iter().map(|&i| raw[i].max(0.0)).sum();
    if mass > 0.0 && mass.is_finite() {
        legal.into_iter().map(|i| (i, raw[i].max(0.0) / mass)).collect()
    } else {
        let u = 1.0 / legal.len() as f64;
        legal.into_iter().map(|i| (i, u)).collect()
    }
}

/// An in-progress search that can be advanced one simulation at a time.
pub struct Search<E> {
    evaluator: E,
    config: SearchConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    trace: SearchTrace,
}

impl<E: Evaluator> Search<E> {
    pub fn new(root: GameState, evaluator: E, config: SearchConfig, seed: u64) -> Result<Self> {
        if root.is_terminal() {
            return Err(Error::Config("search root is terminal".into()));
        }
        Ok(Search {
            evaluator,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: vec![Node { state: root, terminal: false, edges: Vec::new() }],
            trace: SearchTrace {
                root,
                priors: Vec::new(),
                root_value: 0.0,
                pairs: Vec::new(),
                snapshots: config.record_snapshots.then(Vec::new),
            },
        })
    }

    pub fn simulations(&self) -> usize {
        self.trace.simulations()
    }

    pub fn trace(&self) -> &SearchTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SearchTrace {
        self.trace
    }

    pub fn evaluator(&self) -> &E {
        &self.evaluator
    }

    /// Current root counts and sums straight from the tree.
    pub fn root_stats(&self) -> RootStats {
        let a = self.trace.root.num_cells();
        let mut counts = vec![0u32; a];
        let mut sums = vec![0.0; a];
        for e in &self.nodes[0].edges {
            counts[e.action as usize] = e.visits;
            sums[e.action as usize] = e.value_sum;
        }
        RootStats { counts, sums }
    }

    fn expand(&mut self, node: usize) -> f64 {
        let state = self.nodes[node].state;
        let eval = self.evaluator.evaluate(&state);
        let priors = legal_priors(&state, &eval.priors);
        self.nodes[node].edges = priors
            .into_iter()
            .map(|(a, p)| Edge { action: a as u16, prior: p, visits: 0, value_sum: 0.0, child: None })
            .collect();
        eval.value.clamp(-1.0, 1.0)
    }

    fn apply_root_noise(&mut self) {
        let Some(noise) = self.config.noise else { return };
        let edges = &mut self.nodes[0].edges;
        if edges.len() < 2 {
            return;
        }
        let alpha = noise.alpha_scale / edges.len() as f64;
        let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
        let draws: Vec<f64> = edges.iter().map(|_| gamma.sample(&mut self.rng)).collect();
        let total: f64 = draws.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return;
        }
        for (e, d) in edges.iter_mut().zip(draws) {
            e.prior = (1.0 - noise.weight) * e.prior + noise.weight * d / total;
        }
    }

    fn select(&self, node: usize) -> usize {
        let edges = &self.nodes[node].edges;
        let total: u64 = edges.iter().map(|e| e.visits as u64).sum();
        let sqrt_total = (total.max(1) as f64).sqrt();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in edges.iter().enumerate() {
            let q = if e.visits == 0 { -1.0 } else { e.value_sum / e.visits as f64 };
            let score = q + self.config.c_puct * e.prior * sqrt_total / (1.0 + e.visits as f64);
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    /// Runs one simulation.
    pub fn step(&mut self) {
        if self.trace.priors.is_empty() {
            let value = self.expand(0);
            self.apply_root_noise();
            let mut priors = vec![0.0; self.trace.root.num_cells()];
            for e in &self.nodes[0].edges {
                priors[e.action as usize] = e.prior;
            }
            self.trace.priors = priors;
            self.trace.root_value = value;
        } else {
            let mut path: Vec<(usize, usize)> = Vec::new();
            let mut node = 0;
            let leaf_value = loop {
                let ei = self.select(node);
                path.push((node, ei));
                match self.nodes[node].edges[ei].child {
                    Some(child) => {
                        let child = child as usize;
                        if self.nodes[child].terminal {
                            break -1.0;
                        }
                        node = child;
                    }
                    None => {
                        let action = self.nodes[node].edges[ei].action as usize;
                        let state = self.nodes[node].state.play_index(action).expect("edge is legal");
                        let terminal = state.is_terminal();
                        let child = self.nodes.len();
                        self.nodes.push(Node { state, terminal, edges: Vec::new() });
                        self.nodes[node].edges[ei].child = Some(child as u32);
                        break if terminal { -1.0 } else { self.expand(child) };
                    }
                }
            };
            // The leaf sits one ply below the last path entry.
            let depth = path.len();
            for (d, &(n, ei)) in path.iter().enumerate() {
                let v = if (depth - d) % 2 == 0 { leaf_value } else { -leaf_value };
                let e = &mut self.nodes[n].edges[ei];
                e.visits += 1;
                e.value_sum += v;
            }
            let root_edge = &self.nodes[0].edges[path[0].1];
            let v_root = if depth % 2 == 0 { leaf_value } else { -leaf_value };
            self.trace.pairs.push((root_edge.action, v_root));
        }
        if self.trace.snapshots.is_some() {
            let stats = self.root_stats();
            self.trace.snapshots.as_mut().unwrap().push(stats);
        }
    }

    pub fn run(&mut self, simulations: usize) {
        for _ in 0..simulations {
            self.step();
        }
    }

    /// Visit conservation: each non-root node's entry count equals the sum
    /// of its children's counts plus its own evaluation.
    pub fn check_visit_conservation(&self) -> bool {
        for node in &self.nodes {
            for e in &node.edges {
                if let Some(c) = e.child {
                    let child = &self.nodes[c as usize];
                    let below: u32 = child.edges.iter().map(|e| e.visits).sum();
                    if !child.terminal && e.visits != below + 1 {
                        return false;
                    }
                }
                if e.visits > 0 {
                    let q = e.value_sum / e.visits as f64;
                    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&q) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Runs `simulations` simulations from `root`.
pub fn search<E: Evaluator>(
    root: GameState,
    simulations: usize,
    evaluator: E,
    config: SearchConfig,
    seed: u64,
) -> Result<SearchTrace> {
    if simulations == 0 {
        return Err(Error::Config("at least one simulation is required".into()));
    }
    let mut s = Search::new(root, evaluator, config, seed)?;
    s.run(simulations);
    Ok(s.into_trace())
}
