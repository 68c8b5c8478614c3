//! Training sets for the two uncertainty predictors.

use serde::{Deserialize, Serialize};

use super::labeled::LabeledDataset;
use crate::ds::StateUncertainty;
use crate::error::{Error, Result};

/// Index into [`LabeledDataset::states`] plus the targets for State-UN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateUnRow {
    pub state: usize,
    /// `U(s, 1)`.
    pub u_target: f64,
}

pub fn build_state_un_dataset(ds: &LabeledDataset) -> Vec<StateUnRow> {
    ds.states
        .iter()
        .enumerate()
        .map(|(i, s)| StateUnRow { state: i, u_target: ds.entry(s).label.uncertain(1) as u8 as f64 })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MctsUnRow {
    pub state: usize,
    /// `U(s, n*)`.
    pub u_target: f64,
    /// Sampling weight.
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// States with `M = 1` and State-UN output below this are dropped.
    pub prune_threshold: f64,
    /// Acceptable range for the expected positive frequency.
    pub band: (f64, f64),
    /// Positive frequency aimed for when the natural rate is outside `band`.
    pub target: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { prune_threshold: 0.05, band: (0.3, 0.7), target: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub kept: usize,
    pub pruned: usize,
    pub m_equals_one: usize,
    pub positives: usize,
    pub natural_positive_rate: f64,
    pub positive_weight: f64,
    pub expected_positive_rate: f64,
}

/// Indices of states kept after dropping `M = 1` states that the board
/// predictor already scores below `threshold`.
pub fn prune<S: StateUncertainty + ?Sized>(ds: &LabeledDataset, state_un: &S, threshold: f64) -> Vec<usize> {
    ds.states
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let e = ds.entry(s);
            e.label.min_sims != 1 || state_un.state_uncertainty(&e.trace.root) >= threshold
        })
        .map(|(i, _)| i)
        .collect()
}

/// Drops confidently easy states, then weights `U(s, n*) = 1` rows so the
/// expected positive frequency under weighted sampling lies in the band.
pub fn prune_and_balance<S: StateUncertainty + ?Sized>(
    ds: &LabeledDataset,
    state_un: &S,
    n_star: usize,
    cfg: &BalanceConfig,
) -> Result<(Vec<MctsUnRow>, BalanceReport)> {
    if !(0.0 < cfg.band.0 && cfg.band.0 <= cfg.target && cfg.target <= cfg.band.1 && cfg.band.1 < 1.0) {
        return Err(Error::Config(format!("balance band {:?} with target {}", cfg.band, cfg.target)));
    }
    let kept = prune(ds, state_un, cfg.prune_threshold);
    let pruned = ds.len() - kept.len();
    let m1 = ds.states.iter().filter(|s| ds.entry(s).label.min_sims == 1).count();
    let mut rows: Vec<MctsUnRow> = kept
        .into_iter()
        .map(|i| MctsUnRow {
            state: i,
            u_target: ds.entry(&ds.states[i]).label.uncertain(n_star) as u8 as f64,
            weight: 1.0,
        })
        .collect();
    let positives = rows.iter().filter(|r| r.u_target == 1.0).count();
    let negatives = rows.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate(format!(
            "{positives} positive and {negatives} negative rows at n* = {n_star}"
        )));
    }
    let natural = positives as f64 / rows.len() as f64;
    let w = if natural >= cfg.band.0 && natural <= cfg.band.1 {
        1.0
    } else {
        cfg.target * negatives as f64 / ((1.0 - cfg.target) * positives as f64)
    };
    for r in rows.iter_mut().filter(|r| r.u_target == 1.0) {
        r.weight = w;
    }
    let expected = w * positives as f64 / (w * positives as f64 + negatives as f64);
    let report = BalanceReport {
        kept: rows.len(),
        pruned,
        m_equals_one: m1,
        positives,
        natural_positive_rate: natural,
        positive_weight: w,
        expected_positive_rate: expected,
    };
    Ok((rows, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::labeled::{DatasetHeader, LabeledState, TraceEntry, FEATURE_SCHEMA};
    use crate::game::GameState;
    use crate::mcts::SearchTrace;
    use crate::uncertainty::UncertaintyLabel;

    struct Constant(f64);
    impl StateUncertainty for Constant {
        fn state_uncertainty(&self, _: &GameState) -> f64 {
            self.0
        }
    }

    fn synthetic(ms: &[usize]) -> LabeledDataset {
        let root = GameState::new(2).unwrap();
        let traces = ms
            .iter()
            .map(|&m| TraceEntry {
                trace: SearchTrace { root, priors: vec![0.25; 4], root_value: 0.0, pairs: vec![], snapshots: None },
                label: UncertaintyLabel {
                    n_max: 100,
                    epsilon: 0.05,
                    rewards: vec![],
                    min_sims: m,
                    final_policy: vec![0.25; 4],
                    final_q: vec![0.0; 4],
                },
            })
            .collect();
        let states = (0..ms.len()).map(|i| LabeledState { game: i, ply: 0, trace_id: i, z: 1.0 }).collect();
        let header =
            DatasetHeader { version: 1, board_size: 2, n_max: 100, epsilon: 0.05, schema: FEATURE_SCHEMA.into() };
        LabeledDataset { header, traces: std::sync::Arc::new(traces), states }
    }

    #[test]
    fn zero_threshold_prunes_nothing() {
        let ds = synthetic(&[1, 1, 1, 50, 90]);
        let (rows, rep) = prune_and_balance(&ds, &Constant(0.0), 10, &BalanceConfig { prune_threshold: 0.0, ..Default::default() }).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rep.pruned, 0);
    }

    #[test]
    fn rare_positives_are_upweighted_into_the_band() {
        let mut ms = vec![5; 95];
        ms.extend([60; 5]);
        let ds = synthetic(&ms);
        let (rows, rep) = prune_and_balance(&ds, &Constant(1.0), 20, &BalanceConfig::default()).unwrap();
        let total: f64 = rows.iter().map(|r| r.weight).sum();
        let pos: f64 = rows.iter().filter(|r| r.u_target == 1.0).map(|r| r.weight).sum();
        assert!((pos / total - 0.5).abs() < 1e-12);
        assert!((rep.expected_positive_rate - 0.5).abs() < 1e-12);
        assert!((rep.positive_weight - 19.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_degenerate() {
        let ds = synthetic(&[1, 2, 3]);
        assert!(matches!(
            prune_and_balance(&ds, &Constant(1.0), 20, &BalanceConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn state_un_targets() {
        let ds = synthetic(&[1, 2]);
        let rows = build_state_un_dataset(&ds);
        assert_eq!(rows[0].u_target, 0.0);
        assert_eq!(rows[1].u_target, 1.0);
    }
}
