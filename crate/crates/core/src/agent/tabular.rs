//! Table-based counterparts of the deep learner for small scenarios.
//!
//! Learning is synchronous: every sweep updates each allowed state-action
//! pair once from one sampled transition. The simulator's response to each
//! arrival count is read from the enumerated model; the learner only ever
//! sees the sampled outcome, never the probabilities. Arrival counts are
//! drawn by inversion from a per-pair golden-ratio sequence with a random
//! offset, which keeps empirical arrival frequencies close to the true ones
//! and lets the iterates settle far below Monte-Carlo noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TargetRule;
use crate::env::{ArrivalSampler, Environment};
use crate::error::{Error, Result};
use crate::neural::argmin;
use crate::oracle::{Branch, TabularMdp};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub discount: f64,
    pub delta: f64,
    pub sweeps: usize,
    /// Step size after `n` sweeps is `(1 + h) / (h + n)`.
    pub rate_horizon: f64,
    pub target_rule: TargetRule,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            delta: 0.0,
            sweeps: 200_000,
            rate_horizon: 10.0,
            target_rule: TargetRule::SharedGreedy,
        }
    }
}

impl TabularConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config("discount must lie in [0, 1)".into()));
        }
        if self.delta < 0.0 || self.rate_horizon < 0.0 || self.sweeps == 0 {
            return Err(Error::Config("need delta >= 0, rate_horizon >= 0, sweeps >= 1".into()));
        }
        Ok(())
    }

    fn step_size(&self, sweep: usize) -> f64 {
        (1.0 + self.rate_horizon) / (self.rate_horizon + sweep as f64)
    }
}

/// Per-pair low-discrepancy arrival draws.
struct ArrivalStreams<'a> {
    sampler: &'a ArrivalSampler,
    offsets: Vec<Vec<f64>>,
}

impl<'a> ArrivalStreams<'a> {
    fn new(env: &'a Environment, mdp: &TabularMdp, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets = mdp.rows.iter().map(|r| r.iter().map(|_| rng.random::<f64>()).collect()).collect();
        Self { sampler: env.arrival_sampler(), offsets }
    }

    fn draw<'m>(&self, mdp: &'m TabularMdp, s: usize, k: usize, sweep: usize) -> &'m Branch {
        let u = (self.offsets[s][k] + sweep as f64 * GOLDEN).fract();
        let m = self.sampler.invert(u);
        let branches = &mdp.rows[s][k].branches;
        branches.iter().find(|b| b.arrivals == m).unwrap_or(&branches[branches.len() - 1])
    }
}

fn zeros(mdp: &TabularMdp) -> Vec<Vec<f64>> {
    mdp.rows.iter().map(|r| vec![0.0; r.len()]).collect()
}

/// Separate cost and risk tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTables {
    pub cost: Vec<Vec<f64>>,
    pub risk: Vec<Vec<f64>>,
}

impl DualTables {
    /// `Q + delta * Q_risk`.
    pub fn combined(&self, delta: f64) -> Vec<Vec<f64>> {
        self.cost
            .iter()
            .zip(&self.risk)
            .map(|(c, r)| c.iter().zip(r).map(|(a, b)| a + delta * b).collect())
            .collect()
    }
}

/// Greedy action-space index per state, ties to the lowest index.
pub fn greedy_policy(mdp: &TabularMdp, q: &[Vec<f64>]) -> Vec<usize> {
    q.iter().enumerate().map(|(s, row)| mdp.rows[s][argmin(row)].action).collect()
}

/// Dual-table risk-sensitive Q-learning with a fixed weight.
pub fn learn_dual(env: &Environment, mdp: &TabularMdp, config: &TabularConfig, seed: u64) -> Result<DualTables> {
    config.validate()?;
    let streams = ArrivalStreams::new(env, mdp, seed);
    let gamma = config.discount;
    let delta = config.delta;
    let mut qc = zeros(mdp);
    let mut qr = zeros(mdp);
    let mut yc = zeros(mdp);
    let mut yr = zeros(mdp);
    for sweep in 1..=config.sweeps {
        for s in 0..mdp.num_states() {
            for k in 0..mdp.rows[s].len() {
                let b = streams.draw(mdp, s, k, sweep);
                let (nc, nr) = (&qc[b.next], &qr[b.next]);
                let (fc, fr) = match config.target_rule {
                    TargetRule::SeparateMin => (nc[argmin(nc)], nr[argmin(nr)]),
                    TargetRule::SharedGreedy => {
                        let mut best = 0;
                        let mut best_v = f64::INFINITY;
                        for j in 0..nc.len() {
                            let v = nc[j] + delta * nr[j];
                            if v < best_v {
                                best_v = v;
                                best = j;
                            }
                        }
                        (nc[best], nr[best])
                    }
                };
                yc[s][k] = b.cost + gamma * fc;
                yr[s][k] = b.risk + gamma * fr;
            }
        }
        let alpha = config.step_size(sweep);
        for s in 0..mdp.num_states() {
            for k in 0..qc[s].len() {
                qc[s][k] += alpha * (yc[s][k] - qc[s][k]);
                qr[s][k] += alpha * (yr[s][k] - qr[s][k]);
            }
        }
    }
    Ok(DualTables { cost: qc, risk: qr })
}

/// Plain Q-learning on the scalar reward `C + delta * R`.
pub fn learn_single(env: &Environment, mdp: &TabularMdp, config: &TabularConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let streams = ArrivalStreams::new(env, mdp, seed);
    let gamma = config.discount;
    let mut q = zeros(mdp);
    let mut y = zeros(mdp);
    for sweep in 1..=config.sweeps {
        for s in 0..mdp.num_states() {
            for k in 0..mdp.rows[s].len() {
                let b = streams.draw(mdp, s, k, sweep);
                let next = &q[b.next];
                let min = next.iter().cloned().fold(f64::INFINITY, f64::min);
                y[s][k] = b.cost + config.delta * b.risk + gamma * min;
            }
        }
        let alpha = config.step_size(sweep);
        for s in 0..mdp.num_states() {
            for k in 0..q[s].len() {
                q[s][k] += alpha * (y[s][k] - q[s][k]);
            }
        }
    }
    Ok(q)
}
