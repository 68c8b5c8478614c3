//! Seeded head-to-head matches and reporting.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ds::{ds_search, DsConfig, RandomStop, StateUncertainty, StopReason, TreeUncertainty};
use crate::error::{Error, Result};
use crate::game::{GameState, Move, Player};
use crate::mcts::{CachedEvaluator, Evaluator, SearchConfig};
use crate::seed::derive;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveChoice {
    pub action: usize,
    pub simulations: usize,
    pub reason: StopReason,
    /// Uncertainty-network forward passes, not counted in `simulations`.
    pub predictor_evals: usize,
}

pub trait Agent: Sync {
    fn name(&self) -> String;
    fn select(&self, state: &GameState, seed: u64) -> Result<MoveChoice>;
}

const CACHE: usize = 1 << 15;

/// Fixed-budget PUCT search, optionally with the visit-lead rule.
pub struct PvAgent<E> {
    pub evaluator: E,
    pub simulations: usize,
    pub stop_rule: bool,
    pub c_puct: f64,
}

impl<E: Evaluator + Sync> Agent for PvAgent<E> {
    fn name(&self) -> String {
        let stop = if self.stop_rule { "+stop" } else { "" };
        format!("pv({}){stop}", self.simulations)
    }

    fn select(&self, state: &GameState, seed: u64) -> Result<MoveChoice> {
        let mut cfg = DsConfig::new(self.simulations, vec![0], vec![0.0])?;
        cfg.stop_rule = self.stop_rule;
        cfg.c_puct = self.c_puct;
        let cached = CachedEvaluator::new(&self.evaluator, CACHE);
        let out = ds_search(*state, &cfg, &cached, None::<&dyn StateUncertainty>, None::<&dyn TreeUncertainty>, SearchConfig::default(), seed)?;
        Ok(MoveChoice {
            action: out.action,
            simulations: out.decision.simulations,
            reason: out.decision.reason,
            predictor_evals: out.predictor_evals,
        })
    }
}

pub struct DsAgent<E, S, T> {
    pub evaluator: E,
    pub config: DsConfig,
    pub state_un: Option<S>,
    pub mcts_un: Option<T>,
}

impl<E, S, T> Agent for DsAgent<E, S, T>
where
    E: Evaluator + Sync,
    S: StateUncertainty + Sync,
    T: TreeUncertainty + Sync,
{
    fn name(&self) -> String {
        format!("ds({})", self.config.n_max)
    }

    fn select(&self, state: &GameState, seed: u64) -> Result<MoveChoice> {
        let cached = CachedEvaluator::new(&self.evaluator, CACHE);
        let out = ds_search(
            *state,
            &self.config,
            &cached,
            self.state_un.as_ref(),
            self.mcts_un.as_ref(),
            SearchConfig::default(),
            seed,
        )?;
        Ok(MoveChoice {
            action: out.action,
            simulations: out.decision.simulations,
            reason: out.decision.reason,
            predictor_evals: out.predictor_evals,
        })
    }
}

pub struct RandomStopAgent<E> {
    pub evaluator: E,
    pub policy: RandomStop,
    pub c_puct: f64,
}

impl<E: Evaluator + Sync> Agent for RandomStopAgent<E> {
    fn name(&self) -> String {
        format!("random-stop({}/{}@{})", self.policy.reduced_sims, self.policy.n_max, self.policy.fraction)
    }

    fn select(&self, state: &GameState, seed: u64) -> Result<MoveChoice> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = self.policy.budget(&mut rng).max(1);
        let agent = PvAgent { evaluator: &self.evaluator, simulations: budget, stop_rule: false, c_puct: self.c_puct };
        agent.select(state, seed)
    }
}

/// Uniformly random legal moves; for tests and smoke runs.
pub struct RandomAgent;

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn select(&self, state: &GameState, seed: u64) -> Result<MoveChoice> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let legal = state.legal_indices();
        let action = *legal.choose(&mut rng).ok_or(Error::NotTerminal)?;
        Ok(MoveChoice { action, simulations: 0, reason: StopReason::Budget, predictor_evals: 0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub board_size: usize,
    pub games: usize,
    pub seed: u64,
    /// Random plies played before the agents take over, shared by each
    /// color-swapped pair of games.
    pub opening_plies: usize,
    pub swap_colors: bool,
    pub workers: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { board_size: 5, games: 400, seed: 0, opening_plies: 2, swap_colors: true, workers: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveLog {
    pub ply: usize,
    /// `"a"` or `"b"`.
    pub agent: String,
    pub vertex: String,
    pub simulations: usize,
    pub reason: String,
    #[serde(default)]
    pub predictor_evals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameLog {
    pub game: usize,
    pub seed: u64,
    pub a_is_black: bool,
    pub opening: Vec<String>,
    pub moves: Vec<MoveLog>,
    pub winner: Player,
    pub a_won: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub agent_a: String,
    pub agent_b: String,
    pub config: MatchConfig,
    pub games: usize,
    pub a_wins: usize,
    pub a_wins_as_black: usize,
    pub a_games_as_black: usize,
    pub winrate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub a_moves: usize,
    pub a_simulations: usize,
    pub b_moves: usize,
    pub b_simulations: usize,
    #[serde(default)]
    pub a_predictor_evals: usize,
    /// Simulations per move of agent A → number of moves.
    pub a_histogram: BTreeMap<usize, usize>,
    pub a_stop_reasons: BTreeMap<String, usize>,
    pub logs: Vec<GameLog>,
}

impl MatchResult {
    pub fn a_avg_sims(&self) -> f64 {
        self.a_simulations as f64 / self.a_moves.max(1) as f64
    }

    pub fn b_avg_sims(&self) -> f64 {
        self.b_simulations as f64 / self.b_moves.max(1) as f64
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for log in &self.logs {
            serde_json::to_writer(&mut w, log).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// One row per game, a blank line, then [`MatchResult::summary_csv`].
    pub fn games_csv(&self) -> String {
        let mut out = String::from("game,seed,a_is_black,winner,a_won,plies,a_simulations\n");
        for g in &self.logs {
            let sims: usize = g.moves.iter().filter(|m| m.agent == "a").map(|m| m.simulations).sum();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                g.game,
                g.seed,
                g.a_is_black,
                g.winner,
                g.a_won,
                g.opening.len() + g.moves.len(),
                sims
            ));
        }
        out.push('\n');
        out.push_str(&self.summary_csv());
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "agent_a,agent_b,games,a_wins,winrate,wilson_low,wilson_high,a_avg_sims,b_avg_sims,a_predictor_evals_per_move\n{},{},{},{},{:.4},{:.4},{:.4},{:.2},{:.2},{:.3}\n",
            self.agent_a,
            self.agent_b,
            self.games,
            self.a_wins,
            self.winrate,
            self.wilson_low,
            self.wilson_high,
            self.a_avg_sims(),
            self.b_avg_sims(),
            self.a_predictor_evals as f64 / self.a_moves.max(1) as f64
        )
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(wins: usize, games: usize) -> (f64, f64) {
    if games == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = games as f64;
    let p = wins as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn random_opening(size: usize, plies: usize, seed: u64) -> Result<Vec<Move>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = GameState::new(size)?;
    let mut out = Vec::new();
    for _ in 0..plies {
        let legal = state.legal_moves();
        let Some(&m) = legal.choose(&mut rng) else { break };
        state = state.play(m)?;
        out.push(m);
    }
    Ok(out)
}

fn play_game(a: &dyn Agent, b: &dyn Agent, cfg: &MatchConfig, game: usize) -> Result<GameLog> {
    let seed = derive(cfg.seed, game as u64);
    let pair = if cfg.swap_colors { game / 2 } else { game };
    let opening = random_opening(cfg.board_size, cfg.opening_plies, derive(cfg.seed ^ 0x6f70_656e, pair as u64))?;
    let a_is_black = !cfg.swap_colors || game % 2 == 0;
    let mut state = GameState::new(cfg.board_size)?;
    for &m in &opening {
        state = state.play(m)?;
    }
    let mut moves = Vec::new();
    while !state.is_terminal() {
        let a_to_move = (state.to_move() == Player::Black) == a_is_black;
        let agent = if a_to_move { a } else { b };
        let choice = agent.select(&state, derive(seed, state.ply() as u64))?;
        let m = Move::from_index(choice.action, cfg.board_size);
        moves.push(MoveLog {
            ply: state.ply(),
            agent: if a_to_move { "a" } else { "b" }.into(),
            vertex: m.to_vertex(),
            simulations: choice.simulations,
            reason: choice.reason.to_string(),
            predictor_evals: choice.predictor_evals,
        });
        state = state.play(m)?;
    }
    let winner = state.winner()?;
    Ok(GameLog {
        game,
        seed,
        a_is_black,
        opening: opening.iter().map(|m| m.to_vertex()).collect(),
        moves,
        winner,
        a_won: (winner == Player::Black) == a_is_black,
    })
}

/// Plays `cfg.games` games; game `k` is seeded with `derive(seed, k)` and
/// the result does not depend on the worker count.
pub fn play_match(a: &dyn Agent, b: &dyn Agent, cfg: &MatchConfig) -> Result<MatchResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let logs: Vec<GameLog> =
        pool.install(|| (0..cfg.games).into_par_iter().map(|k| play_game(a, b, cfg, k)).collect::<Result<_>>())?;
    Ok(summarise(a.name(), b.name(), *cfg, logs))
}

/// Aggregates per-game logs into match statistics.
pub fn summarise(agent_a: String, agent_b: String, config: MatchConfig, logs: Vec<GameLog>) -> MatchResult {
    let games = logs.len();
    let a_wins = logs.iter().filter(|g| g.a_won).count();
    let a_games_as_black = logs.iter().filter(|g| g.a_is_black).count();
    let a_wins_as_black = logs.iter().filter(|g| g.a_won && g.a_is_black).count();
    let mut a_histogram = BTreeMap::new();
    let mut a_stop_reasons = BTreeMap::new();
    let (mut a_moves, mut a_sims, mut b_moves, mut b_sims, mut a_evals) = (0, 0, 0, 0, 0);
    for m in logs.iter().flat_map(|g| &g.moves) {
        if m.agent == "a" {
            a_moves += 1;
            a_sims += m.simulations;
            a_evals += m.predictor_evals;
            *a_histogram.entry(m.simulations).or_insert(0) += 1;
            *a_stop_reasons.entry(m.reason.clone()).or_insert(0) += 1;
        } else {
            b_moves += 1;
            b_sims += m.simulations;
        }
    }
    let (lo, hi) = wilson_interval(a_wins, games);
    MatchResult {
        agent_a,
        agent_b,
        config,
        games,
        a_wins,
        a_wins_as_black,
        a_games_as_black,
        winrate: a_wins as f64 / games.max(1) as f64,
        wilson_low: lo,
        wilson_high: hi,
        a_moves,
        a_simulations: a_sims,
        b_moves,
        b_simulations: b_sims,
        a_predictor_evals: a_evals,
        a_histogram,
        a_stop_reasons,
        logs,
    }
}

/// Agent A's mean simulations per move over the opponent's fixed budget.
pub fn avg_sim_ratio(result: &MatchResult, opponent_budget: usize) -> f64 {
    result.a_avg_sims() / opponent_budget as f64
}

/// Sorted minimum-simulation curve over a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MscReport {
    /// `(normalised index, M)` in ascending order of `M`.
    pub points: Vec<(f64, usize)>,
    pub mean: f64,
    pub fraction_m1: f64,
    pub n_max: usize,
}

pub fn msc_report(min_sims: &[usize], n_max: usize) -> Result<MscReport> {
    if min_sims.is_empty() {
        return Err(Error::Degenerate("no states".into()));
    }
    if let Some(&m) = min_sims.iter().find(|&&m| m == 0 || m > n_max) {
        return Err(Error::Range(format!("minimum simulation count {m} outside 1..={n_max}")));
    }
    let mut sorted = min_sims.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &m)| (if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 }, m))
        .collect();
    Ok(MscReport {
        points,
        mean: min_sims.iter().sum::<usize>() as f64 / n as f64,
        fraction_m1: min_sims.iter().filter(|&&m| m == 1).count() as f64 / n as f64,
        n_max,
    })
}

impl MscReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("norm_idx,msc\n");
        for (x, m) in &self.points {
            out.push_str(&format!("{x:.6},{m}\n"));
        }
        out
    }
}
