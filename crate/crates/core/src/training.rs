//! Minibatch training loops for the policy-value net and both predictors.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{record_policy, GameRecord, LabeledDataset, MctsUnRow, StateUnRow};
use crate::error::{Error, Result};
use crate::features::{mcts_features, state_features, transform_cells, transform_planes};
use crate::nn::{Architecture, FeatureMask, LossWeights, Network, Sample, Sgd, TrainBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub filters: usize,
    pub blocks: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Train on a random one of the eight board symmetries of each sample.
    #[serde(default)]
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            filters: 32,
            blocks: 2,
            steps: 4000,
            batch_size: 32,
            lr: 0.02,
            momentum: 0.9,
            decay: 0.3,
            decay_every: 1500,
            weights: LossWeights::default(),
            seed: 0,
            augment: false,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    /// Mean minibatch loss over consecutive windows of steps.
    pub loss_curve: Vec<f64>,
}

const WINDOW: usize = 100;

/// Runs `cfg.steps` SGD steps on batches drawn by `draw`.
pub fn train_loop<F>(net: &mut Network, cfg: &TrainConfig, mut draw: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut ChaCha8Rng) -> Sample,
{
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e);
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum).with_step_decay(cfg.decay, cfg.decay_every);
    let mut curve = Vec::new();
    let mut acc = 0.0;
    for step in 0..cfg.steps {
        let batch = TrainBatch::new(
            (0..cfg.batch_size)
                .map(|_| {
                    let s = draw(&mut rng);
                    if cfg.augment {
                        let k = rng.random_range(0..8u8);
                        symmetric(s, k)
                    } else {
                        s
                    }
                })
                .collect(),
        );
        acc += sgd.step(net, &batch, &cfg.weights)?;
        if (step + 1) % WINDOW == 0 || step + 1 == cfg.steps {
            let len = (step % WINDOW) + 1;
            curve.push(acc / len as f64);
            acc = 0.0;
        }
    }
    Ok(curve)
}

fn symmetric(s: Sample, k: u8) -> Sample {
    let size = s.state.shape()[1];
    Sample {
        state: transform_planes(&s.state, k),
        mcts: s.mcts.as_ref().map(|t| transform_planes(t, k)),
        policy_target: transform_cells(&s.policy_target, k, size),
        ..s
    }
}

fn init(arch: Architecture, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::random(arch, &mut rng)
}

/// Policy-value net on visit-count targets and game outcomes.
pub fn train_pv(records: &[GameRecord], cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    let size = records.first().ok_or_else(|| Error::Degenerate("no games".into()))?.size;
    let mut samples = Vec::new();
    for r in records {
        let positions = r.positions()?;
        for i in 0..r.moves.len() {
            let Some(policy) = record_policy(r, i) else {
                return Err(Error::Format("records lack visit counts".into()));
            };
            samples.push(Sample {
                state: state_features(&positions[i]),
                mcts: None,
                u_target: 0.0,
                policy_target: policy,
                z: r.outcome_at(i),
                mask: FeatureMask::Both,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::Degenerate("no positions to train on".into()));
    }
    let mut net = init(Architecture::state_net(size, cfg.filters, cfg.blocks), cfg.seed)?;
    let curve = train_loop(&mut net, cfg, |rng| samples[rng.random_range(0..samples.len())].clone())?;
    Ok((net, TrainReport { samples: samples.len(), loss_curve: curve }))
}

/// Board-only predictor of `U(s, 1)`.
pub fn train_state_un(ds: &LabeledDataset, rows: &[StateUnRow], cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    if rows.is_empty() {
        return Err(Error::Degenerate("no rows".into()));
    }
    let samples: Vec<Sample> = rows
        .iter()
        .map(|r| {
            let st = &ds.states[r.state];
            let e = ds.entry(st);
            Sample {
                state: state_features(&e.trace.root),
                mcts: None,
                u_target: r.u_target,
                policy_target: e.label.final_policy.clone(),
                z: st.z,
                mask: FeatureMask::Both,
            }
        })
        .collect();
    let mut net = init(Architecture::state_net(ds.header.board_size, cfg.filters, cfg.blocks), cfg.seed)?;
    let curve = train_loop(&mut net, cfg, |rng| samples[rng.random_range(0..samples.len())].clone())?;
    Ok((net, TrainReport { samples: samples.len(), loss_curve: curve }))
}

/// Board-plus-tree predictor of `U(s, n*)`, sampled by row weight with
/// feature-group dropout.
pub fn train_mcts_un(
    ds: &LabeledDataset,
    rows: &[MctsUnRow],
    n_star: usize,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if rows.is_empty() {
        return Err(Error::Degenerate("no rows".into()));
    }
    let samples = rows
        .iter()
        .map(|r| {
            let st = &ds.states[r.state];
            let e = ds.entry(st);
            Ok(Sample {
                state: state_features(&e.trace.root),
                mcts: Some(mcts_features(&e.trace, n_star)?),
                u_target: r.u_target,
                policy_target: e.label.final_policy.clone(),
                z: st.z,
                mask: FeatureMask::Both,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = WeightedIndex::new(rows.iter().map(|r| r.weight)).map_err(|e| Error::Config(e.to_string()))?;
    let mut net = init(Architecture::mcts_net(ds.header.board_size, cfg.filters, cfg.blocks), cfg.seed)?;
    let curve = train_loop(&mut net, cfg, |rng| {
        let mut s = samples[dist.sample(rng)].clone();
        s.mask = FeatureMask::sample(rng);
        s
    })?;
    Ok((net, TrainReport { samples: samples.len(), loss_curve: curve }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_selfplay, SelfplayConfig};
    use crate::mcts::RolloutEvaluator;

    #[test]
    fn pv_training_fits_its_data() {
        let eval = RolloutEvaluator { playouts: 2, seed: 0 };
        let sp = SelfplayConfig { board_size: 3, games: 2, sims_per_move: 32, seed: 1, ..Default::default() };
        let records = generate_selfplay(&eval, &sp).unwrap();
        let cfg = TrainConfig {
            filters: 8,
            blocks: 1,
            steps: 400,
            batch_size: 8,
            lr: 0.02,
            weights: LossWeights::policy_value(),
            ..Default::default()
        };
        let (net, rep) = train_pv(&records, &cfg).unwrap();
        let samples: Vec<Sample> = records
            .iter()
            .flat_map(|r| {
                let pos = r.positions().unwrap();
                (0..r.moves.len())
                    .map(|i| Sample {
                        state: state_features(&pos[i]),
                        mcts: None,
                        u_target: 0.0,
                        policy_target: record_policy(r, i).unwrap(),
                        z: r.outcome_at(i),
                        mask: FeatureMask::Both,
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(rep.samples, samples.len());
        let batch = TrainBatch::new(samples);
        let before = init(Architecture::state_net(3, 8, 1), cfg.seed).unwrap().loss(&batch, &cfg.weights).unwrap();
        let after = net.loss(&batch, &cfg.weights).unwrap();
        assert!(after < 0.7 * before, "{before} -> {after}");
    }

    #[test]
    fn overfits_a_single_uncertainty_target() {
        let cfg = TrainConfig { filters: 4, blocks: 1, steps: 200, batch_size: 4, lr: 0.05, ..Default::default() };
        let state = state_features(&crate::game::GameState::new(3).unwrap());
        let sample = Sample {
            state,
            mcts: None,
            u_target: 1.0,
            policy_target: vec![1.0 / 9.0; 9],
            z: 1.0,
            mask: FeatureMask::Both,
        };
        let mut net = init(Architecture::state_net(3, 4, 1), 0).unwrap();
        train_loop(&mut net, &cfg, |_| sample.clone()).unwrap();
        let p = net.forward(&sample.state, None).unwrap();
        assert!(p.u > 0.9, "u = {}", p.u);
        assert!(p.v > 0.8, "v = {}", p.v);
    }
}
