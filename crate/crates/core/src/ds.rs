//! Search with learned early stopping.
//!
//! Before the first simulation the board-only predictor (or the
//! temperature-scaled prior) decides whether the prior alone is good
//! enough. At each later checkpoint `c[i]` the tree predictor looks at
//! `T(s, c[i])` and the search stops once its output drops below `thr[i]`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{mcts_features, state_features};
use crate::game::GameState;
use crate::mcts::{argmax_lowest, Evaluator, Search, SearchConfig, SearchTrace};
use crate::nn::Network;
use crate::uncertainty::calibrated_uncertainty;

/// Predicts `U(s, 1)` from the position alone.
pub trait StateUncertainty {
    fn state_uncertainty(&self, state: &GameState) -> f64;
}

/// Predicts `U(s, n)` from the position and the tree after `n` simulations.
pub trait TreeUncertainty {
    fn tree_uncertainty(&self, trace: &SearchTrace, n: usize) -> Result<f64>;
}

impl StateUncertainty for Network {
    fn state_uncertainty(&self, state: &GameState) -> f64 {
        self.forward(&state_features(state), None).expect("state predictor must take board planes only").u
    }
}

impl TreeUncertainty for Network {
    fn tree_uncertainty(&self, trace: &SearchTrace, n: usize) -> Result<f64> {
        let t = mcts_features(trace, n)?;
        Ok(self.forward(&state_features(&trace.root), Some(&t))?.u)
    }
}

impl<T: StateUncertainty + ?Sized> StateUncertainty for &T {
    fn state_uncertainty(&self, state: &GameState) -> f64 {
        (**self).state_uncertainty(state)
    }
}

impl<T: TreeUncertainty + ?Sized> TreeUncertainty for &T {
    fn tree_uncertainty(&self, trace: &SearchTrace, n: usize) -> Result<f64> {
        (**self).tree_uncertainty(trace, n)
    }
}

/// How the checkpoint at zero simulations is scored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StartMode {
    /// Board-only predictor.
    StateUn,
    /// `1 − max softmax(log p / τ)` of the prior.
    Calibrated { tau: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsConfig {
    pub n_max: usize,
    /// `c[0] = 0`, then strictly increasing counts in `2..=n_max`.
    pub checkpoints: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub start: StartMode,
    /// Also apply the visit-lead stopping rule after every simulation.
    pub stop_rule: bool,
    pub c_puct: f64,
}

impl DsConfig {
    pub fn new(n_max: usize, checkpoints: Vec<usize>, thresholds: Vec<f64>) -> Result<Self> {
        let cfg = DsConfig { n_max, checkpoints, thresholds, start: StartMode::StateUn, stop_rule: false, c_puct: 1.5 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be positive".into()));
        }
        if self.checkpoints.first() != Some(&0) {
            return Err(Error::Config("the first checkpoint must be 0".into()));
        }
        if self.checkpoints.len() != self.thresholds.len() {
            return Err(Error::Config(format!(
                "{} checkpoints but {} thresholds",
                self.checkpoints.len(),
                self.thresholds.len()
            )));
        }
        for w in self.checkpoints.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!("checkpoints not increasing: {:?}", self.checkpoints)));
            }
        }
        if let Some(&c) = self.checkpoints.get(1) {
            if c < 2 {
                return Err(Error::Config("tree checkpoints need at least 2 simulations".into()));
            }
        }
        if self.checkpoints.last().is_some_and(|&c| c > self.n_max) {
            return Err(Error::Config(format!("checkpoint beyond n_max = {}", self.n_max)));
        }
        if self.thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Config(format!("thresholds must be finite and non-negative: {:?}", self.thresholds)));
        }
        if let StartMode::Calibrated { tau } = self.start {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!("temperature {tau}")));
            }
        }
        Ok(())
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for DsConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n_max={}", self.n_max)?;
        writeln!(f, "checkpoints={}", join(&self.checkpoints))?;
        writeln!(f, "thresholds={}", join(&self.thresholds))?;
        match self.start {
            StartMode::StateUn => writeln!(f, "mode=state-un")?,
            StartMode::Calibrated { tau } => {
                writeln!(f, "mode=calibrated")?;
                writeln!(f, "tau={tau}")?;
            }
        }
        writeln!(f, "stop={}", self.stop_rule)?;
        writeln!(f, "c_puct={}", self.c_puct)
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("bad {key} entry {x:?}"))))
        .collect()
}

impl FromStr for DsConfig {
    type Err = Error;

    /// `key=value` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut n_max = None;
        let mut checkpoints = None;
        let mut thresholds = None;
        let mut mode = "state-un".to_string();
        let mut tau = 1.0;
        let mut stop_rule = false;
        let mut c_puct = 1.5;
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |_| Error::Config(format!("bad value for {k}: {v:?}"));
            match k {
                "n_max" => n_max = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "checkpoints" => checkpoints = Some(parse_list(k, v)?),
                "thresholds" => thresholds = Some(parse_list(k, v)?),
                "mode" => mode = v.to_string(),
                "tau" => tau = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "stop" => stop_rule = v.parse().map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?,
                "c_puct" => c_puct = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                _ => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        let start = match mode.as_str() {
            "state-un" => StartMode::StateUn,
            "calibrated" => StartMode::Calibrated { tau },
            other => return Err(Error::Config(format!("unknown mode {other:?}"))),
        };
        let cfg = DsConfig {
            n_max: n_max.ok_or_else(|| Error::Config("missing n_max".into()))?,
            checkpoints: checkpoints.ok_or_else(|| Error::Config("missing checkpoints".into()))?,
            thresholds: thresholds.ok_or_else(|| Error::Config("missing thresholds".into()))?,
            start,
            stop_rule,
            c_puct,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Why a search ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    /// Answered from the prior before any simulation.
    Start,
    /// Tree predictor fired at checkpoint index `i`.
    Checkpoint(usize),
    /// Visit lead exceeded the remaining budget.
    VisitLead,
    /// Ran the full budget.
    Budget,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Start => write!(f, "start"),
            StopReason::Checkpoint(i) => write!(f, "checkpoint{i}"),
            StopReason::VisitLead => write!(f, "stop"),
            StopReason::Budget => write!(f, "budget"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopDecision {
    /// Simulations charged to this move; the root evaluation is not one.
    pub simulations: usize,
    pub reason: StopReason,
}

#[derive(Clone, Debug)]
pub struct DsOutcome {
    /// Greedy answer distribution: the masked prior when stopping at the
    /// start, otherwise the visit policy.
    pub policy: Vec<f64>,
    pub action: usize,
    pub decision: StopDecision,
    pub trace: SearchTrace,
    /// Forward passes of the uncertainty networks, kept apart from simulations.
    pub predictor_evals: usize,
}

/// `N(best) − N(second) > n_max − n`: the leader can no longer be caught.
pub fn stop_rule_fires(counts: &[u32], n: usize, n_max: usize) -> bool {
    if n >= n_max {
        return true;
    }
    let mut best = 0u32;
    let mut second = 0u32;
    for &c in counts {
        if c > best {
            second = best;
            best = c;
        } else if c > second {
            second = c;
        }
    }
    (best - second) as usize > n_max - n
}

fn start_uncertainty<S: StateUncertainty + ?Sized>(cfg: &DsConfig, state_un: Option<&S>, trace: &SearchTrace) -> Result<f64> {
    match cfg.start {
        StartMode::StateUn => state_un
            .map(|s| s.state_uncertainty(&trace.root))
            .ok_or_else(|| Error::Config("state-un mode needs a state predictor".into())),
        StartMode::Calibrated { tau } => calibrated_uncertainty(&trace.priors, tau),
    }
}

/// Runs PUCT search up to `cfg.n_max` simulations, stopping early per the
/// configured predictors. With all thresholds at zero the result is the
/// plain search.
pub fn ds_search<E, S, T>(
    root: GameState,
    cfg: &DsConfig,
    evaluator: E,
    state_un: Option<&S>,
    mcts_un: Option<&T>,
    search_config: SearchConfig,
    seed: u64,
) -> Result<DsOutcome>
where
    E: Evaluator,
    S: StateUncertainty + ?Sized,
    T: TreeUncertainty + ?Sized,
{
    cfg.validate()?;
    let mut search = Search::new(root, evaluator, SearchConfig { c_puct: cfg.c_puct, ..search_config }, seed)?;
    // The first step only evaluates the root, giving the prior.
    search.step();
    let mut predictor_evals = 0;
    if cfg.thresholds[0] > 0.0 {
        predictor_evals += matches!(cfg.start, StartMode::StateUn) as usize;
        if start_uncertainty(cfg, state_un, search.trace())? < cfg.thresholds[0] {
            let trace = search.into_trace();
            let action = argmax_lowest(&trace.priors);
            return Ok(DsOutcome {
                policy: trace.priors.clone(),
                action,
                decision: StopDecision { simulations: 0, reason: StopReason::Start },
                trace,
                predictor_evals,
            });
        }
    }
    let mut next = 1;
    let mut reason = StopReason::Budget;
    while search.simulations() < cfg.n_max {
        search.step();
        let n = search.simulations();
        if next < cfg.checkpoints.len() && cfg.checkpoints[next] == n {
            let thr = cfg.thresholds[next];
            if thr > 0.0 {
                let predictor = mcts_un.ok_or_else(|| Error::Config("tree checkpoints need a tree predictor".into()))?;
                predictor_evals += 1;
                if predictor.tree_uncertainty(search.trace(), n)? < thr {
                    reason = StopReason::Checkpoint(next);
                    break;
                }
            }
            next += 1;
        }
        if cfg.stop_rule && n < cfg.n_max && stop_rule_fires(&search.root_stats().counts, n, cfg.n_max) {
            reason = StopReason::VisitLead;
            break;
        }
    }
    let trace = search.into_trace();
    let n = trace.simulations();
    let action = trace.best_action(n)?;
    let policy = trace.root_policy(n, 0.0)?;
    Ok(DsOutcome { policy, action, decision: StopDecision { simulations: n, reason }, trace, predictor_evals })
}

/// Baseline that spends a reduced budget on a random fraction of moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomStop {
    pub fraction: f64,
    pub reduced_sims: usize,
    pub n_max: usize,
}

impl RandomStop {
    pub fn budget<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.fraction {
            self.reduced_sims
        } else {
            self.n_max
        }
    }

    pub fn expected_sims(&self) -> f64 {
        self.fraction * self.reduced_sims as f64 + (1.0 - self.fraction) * self.n_max as f64
    }
}

/// Predictor outputs at every checkpoint for a set of positions, plus
/// their minimum simulation counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScores {
    pub checkpoints: Vec<usize>,
    /// `scores[s][i]`: uncertainty of position `s` at checkpoint `i`.
    pub scores: Vec<Vec<f64>>,
    pub min_sims: Vec<usize>,
    pub n_max: usize,
}

impl CheckpointScores {
    /// Scores positions from their deep traces. Noise-free search is
    /// deterministic, so the prefix of a deep trace is exactly the tree the
    /// online search sees at each checkpoint.
    pub fn compute<S, T>(
        entries: &[(&SearchTrace, usize)],
        cfg: &DsConfig,
        state_un: Option<&S>,
        mcts_un: Option<&T>,
    ) -> Result<Self>
    where
        S: StateUncertainty + ?Sized,
        T: TreeUncertainty + ?Sized,
    {
        cfg.validate()?;
        let mut scores = Vec::with_capacity(entries.len());
        for (trace, _) in entries {
            if trace.simulations() < cfg.n_max {
                return Err(Error::Range("trace shorter than n_max".into()));
            }
            let mut row = vec![start_uncertainty(cfg, state_un, trace)?];
            for &c in &cfg.checkpoints[1..] {
                let p = mcts_un.ok_or_else(|| Error::Config("tree checkpoints need a tree predictor".into()))?;
                row.push(p.tree_uncertainty(trace, c)?);
            }
            scores.push(row);
        }
        Ok(CheckpointScores {
            checkpoints: cfg.checkpoints.clone(),
            scores,
            min_sims: entries.iter().map(|e| e.1).collect(),
            n_max: cfg.n_max,
        })
    }

    /// `U(s, c[i])`; the start checkpoint is judged as `U(s, 1)`.
    pub fn positive(&self, s: usize, i: usize) -> bool {
        self.checkpoints[i].max(1) < self.min_sims[s]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub checkpoint: usize,
    pub threshold: f64,
    pub positives: usize,
    /// Share of positives kept searching: `score ≥ thr`. 1 if none.
    pub recall: f64,
    /// Positions whose search ends here in the cascade.
    pub stopped: usize,
    /// Cascade stops here on a position still uncertain at this count.
    pub false_stops: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub checkpoints: Vec<CheckpointReport>,
    pub positions: usize,
    pub projected_avg_sims: f64,
    pub projected_ratio: f64,
    pub false_stop_rate: f64,
}

/// Recall per checkpoint and the cascade's projected simulation cost.
pub fn validate_thresholds(scores: &CheckpointScores, thresholds: &[f64]) -> Result<ThresholdReport> {
    let k = scores.checkpoints.len();
    if thresholds.len() != k {
        return Err(Error::Config(format!("{} thresholds for {k} checkpoints", thresholds.len())));
    }
    let mut reports: Vec<CheckpointReport> = scores
        .checkpoints
        .iter()
        .zip(thresholds)
        .map(|(&c, &t)| CheckpointReport { checkpoint: c, threshold: t, positives: 0, recall: 1.0, stopped: 0, false_stops: 0 })
        .collect();
    let mut kept = vec![0usize; k];
    let mut reached_end = 0usize;
    for (s, row) in scores.scores.iter().enumerate() {
        for i in 0..k {
            if scores.positive(s, i) {
                reports[i].positives += 1;
                if row[i] >= thresholds[i] {
                    kept[i] += 1;
                }
            }
        }
        match (0..k).find(|&i| row[i] < thresholds[i]) {
            Some(i) => {
                reports[i].stopped += 1;
                if scores.positive(s, i) {
                    reports[i].false_stops += 1;
                }
            }
            None => reached_end += 1,
        }
    }
    for (r, kept) in reports.iter_mut().zip(kept) {
        if r.positives > 0 {
            r.recall = kept as f64 / r.positives as f64;
        }
    }
    let n = scores.scores.len().max(1) as f64;
    let charged: usize = reports.iter().map(|r| r.checkpoint * r.stopped).sum::<usize>() + scores.n_max * reached_end;
    let false_stops: usize = reports.iter().map(|r| r.false_stops).sum();
    let avg = charged as f64 / n;
    Ok(ThresholdReport {
        checkpoints: reports,
        positions: scores.scores.len(),
        projected_avg_sims: avg,
        projected_ratio: avg / scores.n_max as f64,
        false_stop_rate: false_stops as f64 / n,
    })
}

/// Per checkpoint, the largest grid value whose recall exceeds `target`.
/// Falls back to 0 (never stop) when no grid value qualifies.
pub fn select_thresholds(scores: &CheckpointScores, grid: &[f64], target: f64) -> Vec<f64> {
    (0..scores.checkpoints.len())
        .map(|i| {
            let pos: Vec<f64> = (0..scores.scores.len())
                .filter(|&s| scores.positive(s, i))
                .map(|s| scores.scores[s][i])
                .collect();
            grid.iter()
                .copied()
                .filter(|&t| {
                    let recall = if pos.is_empty() {
                        1.0
                    } else {
                        pos.iter().filter(|&&u| u >= t).count() as f64 / pos.len() as f64
                    };
                    recall > target
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `0.00, 0.01, …, 1.00`.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}
