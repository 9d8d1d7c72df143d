//! Dense Q-value approximators: forward pass, backprop, Adam, the action
//! filter and prediction/target pairs.

mod net;
mod optim;

use serde::{Deserialize, Serialize};

pub use net::{Dense, DenseNet, Gradients};
pub use optim::{Adam, AdamConfig};

use crate::error::{Error, Result};
use crate::mdp::ActionMask;

/// Offset added to disallowed actions.
pub const FILTER_OFFSET: f64 = 1e6;

/// Raises every disallowed entry by `offset`, leaving allowed ones
/// untouched. A disallowed entry is first lifted to the largest allowed
/// value, so it stays above all of them however large the Q-values get.
pub fn apply_filter(q: &[f64], mask: &ActionMask, offset: f64) -> Vec<f64> {
    debug_assert_eq!(q.len(), mask.len());
    let top = q
        .iter()
        .zip(&mask.allowed)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    q.iter()
        .zip(&mask.allowed)
        .map(|(&v, &ok)| if ok { v } else { v.max(top) + offset })
        .collect()
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// A prediction net with its frozen target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPair {
    pub prediction: DenseNet,
    pub target: DenseNet,
    /// Iterations between target refreshes.
    pub replace_period: u64,
}

impl TargetPair {
    pub fn new(prediction: DenseNet, replace_period: u64) -> Self {
        Self {
            target: prediction.clone(),
            prediction,
            replace_period: replace_period.max(1),
        }
    }

    pub fn copy_into_target(&mut self) {
        self.target.copy_from(&self.prediction);
    }

    /// Refreshes the target if `iteration` falls on the replacement period.
    pub fn maybe_replace(&mut self, iteration: u64) -> bool {
        if iteration > 0 && iteration % self.replace_period == 0 {
            self.copy_into_target();
            true
        } else {
            false
        }
    }
}

/// A target pair trained by its own optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    pub nets: TargetPair,
    pub optimizer: Adam,
}

impl QFunction {
    pub fn new(net: DenseNet, replace_period: u64, config: AdamConfig) -> Self {
        let optimizer = Adam::new(&net, config);
        Self {
            nets: TargetPair::new(net, replace_period),
            optimizer,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.nets.prediction.forward(x)
    }

    pub fn target(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.nets.target.forward(x)
    }

    /// One optimizer step on the squared TD error of the chosen actions.
    /// Returns the pre-update loss.
    pub fn td_train_step(&mut self, inputs: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<f64> {
        td_train_step(&mut self.nets.prediction, &mut self.optimizer, inputs, actions, targets)
    }
}

/// Minimises `mean (target - Q(s, a))^2 + l2 |W|^2` by one Adam step.
pub fn td_train_step(
    net: &mut DenseNet,
    opt: &mut Adam,
    inputs: &[Vec<f64>],
    actions: &[usize],
    targets: &[f64],
) -> Result<f64> {
    let (loss, mut grads) = net.td_loss_and_grad(inputs, actions, targets, opt.config.l2)?;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite TD loss {loss} (targets range {:?})",
            targets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
        )));
    }
    opt.update(net, &mut grads);
    if !net.is_finite() {
        return Err(Error::Divergence("parameters became non-finite".into()));
    }
    Ok(loss)
}
