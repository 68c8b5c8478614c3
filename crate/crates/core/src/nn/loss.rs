use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activations, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability floor inside the policy cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Gradient magnitude below which the check measures absolute error:
/// central differences at `h = 1e-5` carry about `1e-11` of round-off.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Weights of `w_u·(u − U)² + c1·((v − z)² − πᵀ log p) + c2·‖θ‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub uncertainty: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::DEFAULT
    }
}

impl LossWeights {
    pub const DEFAULT: LossWeights = LossWeights { uncertainty: 1.0, c1: 0.1, c2: 1e-4 };

    /// Plain policy/value training: no uncertainty term, unit weight on the rest.
    pub fn policy_value() -> Self {
        LossWeights { uncertainty: 0.0, c1: 1.0, c2: 1e-4 }
    }
}

/// Which input group a training sample sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMask {
    Both,
    StateOnly,
    MctsOnly,
}

impl FeatureMask {
    /// 50% both groups, 25% board only, 25% tree features only.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        match rng.random_range(0..4u8) {
            0 | 1 => FeatureMask::Both,
            2 => FeatureMask::StateOnly,
            _ => FeatureMask::MctsOnly,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub state: Tensor,
    pub mcts: Option<Tensor>,
    pub u_target: f64,
    pub policy_target: Vec<f64>,
    pub z: f64,
    pub mask: FeatureMask,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.u_target) {
            return Err(Error::Range(format!("uncertainty target {}", self.u_target)));
        }
        if self.z != 1.0 && self.z != -1.0 {
            return Err(Error::Range(format!("outcome {}", self.z)));
        }
        let sum: f64 = self.policy_target.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.policy_target.iter().any(|&p| p < 0.0) {
            return Err(Error::Range(format!("policy target sums to {sum}")));
        }
        if self.mask == FeatureMask::MctsOnly && self.mcts.is_none() {
            return Err(Error::Range("tree-only mask without tree features".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainBatch {
    pub samples: Vec<Sample>,
}

impl TrainBatch {
    pub fn new(samples: Vec<Sample>) -> Self {
        TrainBatch { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The per-sample data term (everything but weight decay).
pub(crate) fn sample_loss(weights: &LossWeights, acts: &Activations, s: &Sample) -> f64 {
    let du = acts.u - s.u_target;
    let dv = acts.v - s.z;
    let ce: f64 = s
        .policy_target
        .iter()
        .zip(&acts.policy)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| -t * p.max(PROB_FLOOR).ln())
        .sum();
    weights.uncertainty * du * du + weights.c1 * (dv * dv + ce)
}

impl Network {
    fn check_batch(&self, batch: &TrainBatch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let area = self.arch.area();
        for s in &batch.samples {
            s.validate()?;
            if s.policy_target.len() != area {
                return Err(Error::Shape(format!("policy target length {} != {area}", s.policy_target.len())));
            }
        }
        Ok(())
    }

    pub fn l2(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }

    /// Batch mean of the three-term loss plus `c2·‖θ‖²`.
    pub fn loss(&self, batch: &TrainBatch, weights: &LossWeights) -> Result<f64> {
        self.check_batch(batch)?;
        let mut total = 0.0;
        for s in &batch.samples {
            let acts = self.forward_masked(&s.state, s.mcts.as_ref(), s.mask)?;
            total += sample_loss(weights, &acts, s);
        }
        Ok(total / batch.len() as f64 + weights.c2 * self.l2())
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &TrainBatch, weights: &LossWeights) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for s in &batch.samples {
            let acts = self.forward_masked(&s.state, s.mcts.as_ref(), s.mask)?;
            total += sample_loss(weights, &acts, s);

            let d_upre = scale * weights.uncertainty * 2.0 * (acts.u - s.u_target) * acts.u * (1.0 - acts.u);
            let d_vpre = scale * weights.c1 * 2.0 * (acts.v - s.z) * (1.0 - acts.v * acts.v);
            // Cross-entropy through the floor: floored entries contribute no gradient.
            let active_mass: f64 = s
                .policy_target
                .iter()
                .zip(&acts.policy)
                .filter(|(_, p)| **p >= PROB_FLOOR)
                .map(|(t, _)| t)
                .sum();
            let d_logits: Vec<f64> = s
                .policy_target
                .iter()
                .zip(&acts.policy)
                .map(|(&t, &p)| {
                    let own = if p >= PROB_FLOOR { t } else { 0.0 };
                    scale * weights.c1 * (p * active_mass - own)
                })
                .collect();
            self.backward(&acts, &d_logits, d_vpre, d_upre, &mut grad);
        }
        for (g, p) in grad.iter_mut().zip(&self.params) {
            *g += 2.0 * weights.c2 * p;
        }
        Ok((total * scale + weights.c2 * self.l2(), grad))
    }

    fn relu_patterns(&self, batch: &TrainBatch) -> Result<Vec<Vec<bool>>> {
        batch
            .samples
            .iter()
            .map(|s| Ok(self.forward_masked(&s.state, s.mcts.as_ref(), s.mask)?.relu_pattern()))
            .collect()
    }
}

/// Compares the analytic gradient with central differences on `coords`
/// randomly chosen parameters and returns the largest relative error
/// `|a − n| / max(|a|, |n|, GRAD_FLOOR)`. Coordinates whose ±h perturbation flips
/// any ReLU or probability-floor state are skipped and redrawn.
pub fn gradient_check<R: Rng + ?Sized>(
    net: &Network,
    batch: &TrainBatch,
    weights: &LossWeights,
    coords: usize,
    rng: &mut R,
) -> Result<f64> {
    let (_, analytic) = net.loss_and_gradient(batch, weights)?;
    gradient_check_against(net, batch, weights, &analytic, coords, rng)
}

/// Same as [`gradient_check`] but against a caller-supplied gradient.
pub fn gradient_check_against<R: Rng + ?Sized>(
    net: &Network,
    batch: &TrainBatch,
    weights: &LossWeights,
    analytic: &[f64],
    coords: usize,
    rng: &mut R,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let base_pattern = net.relu_patterns(batch)?;
    let n = net.num_params();
    let order = sample(rng, n, n);
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for idx in order.iter() {
        if checked >= coords {
            break;
        }
        let orig = probe.params[idx];
        probe.params[idx] = orig + H;
        let plus_pattern = probe.relu_patterns(batch)?;
        let plus = probe.loss(batch, weights)?;
        probe.params[idx] = orig - H;
        let minus_pattern = probe.relu_patterns(batch)?;
        let minus = probe.loss(batch, weights)?;
        probe.params[idx] = orig;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            continue;
        }
        let numeric = (plus - minus) / (2.0 * H);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(rel);
        checked += 1;
    }
    if checked < coords.min(n) {
        return Err(Error::Range(format!("only {checked} kink-free coordinates found")));
    }
    Ok(worst)
}
