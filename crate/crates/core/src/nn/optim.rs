use serde::{Deserialize, Serialize};

use super::{LossWeights, Network, TrainBatch};
use crate::error::{Error, Result};

/// SGD with classical momentum and a step-decay learning-rate schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    /// Multiply `lr` by `decay` every `decay_every` steps (0 disables).
    pub decay: f64,
    pub decay_every: usize,
    #[serde(skip)]
    velocity: Vec<f64>,
    #[serde(skip)]
    steps: usize,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum, decay: 1.0, decay_every: 0, velocity: Vec::new(), steps: 0 }
    }

    pub fn with_step_decay(mut self, decay: f64, every: usize) -> Self {
        self.decay = decay;
        self.decay_every = every;
        self
    }

    pub fn current_lr(&self) -> f64 {
        if self.decay_every == 0 {
            self.lr
        } else {
            self.lr * self.decay.powi((self.steps / self.decay_every) as i32)
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Applies a precomputed gradient. Rejects the whole step if any
    /// component is non-finite; `net` is left untouched in that case.
    pub fn apply(&mut self, net: &mut Network, grad: &[f64]) -> Result<()> {
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        if grad.len() != net.num_params() {
            return Err(Error::Shape(format!("gradient length {} != {}", grad.len(), net.num_params())));
        }
        if self.velocity.len() != grad.len() {
            self.velocity = vec![0.0; grad.len()];
        }
        let lr = self.current_lr();
        if lr < 0.0 {
            return Err(Error::Config(format!("learning rate {lr} must be non-negative")));
        }
        for ((p, v), g) in net.params_mut().iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        self.steps += 1;
        Ok(())
    }

    /// One gradient step on `batch`; returns the pre-step loss.
    pub fn step(&mut self, net: &mut Network, batch: &TrainBatch, weights: &LossWeights) -> Result<f64> {
        let (loss, grad) = net.loss_and_gradient(batch, weights)?;
        self.apply(net, &grad)?;
        Ok(loss)
    }
}
