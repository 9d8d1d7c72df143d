//! Risk-sensitive deep Q-learning with an outer constraint-weight search.
//!
//! Two Q-functions are learned side by side: one for the delay cost and one
//! for the energy risk. Actions minimise `Q + delta * Q_risk` over the
//! allowed set, and `delta` moves up or down by a fixed step after every
//! episode depending on whether the episode's average energy exceeded the
//! budget.

mod replay;
mod schedule;
pub mod tabular;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use replay::{ReplayMemory, Transition};
pub use schedule::ExploreSchedule;

use crate::env::{EnvState, Environment};
use crate::error::{Error, Result};
use crate::mdp::{self, ActionMask, ActionSpace, StateEncoder};
use crate::neural::{apply_filter, argmin, AdamConfig, DenseNet, QFunction, FILTER_OFFSET};
use crate::policy::{uniform_allowed, Policy};

/// How bootstrap targets pick the next-state action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetRule {
    /// Each Q-function bootstraps from its own minimum.
    #[default]
    SeparateMin,
    /// Both bootstrap from the action minimising `Q + delta * Q_risk`, which
    /// makes the weighted sum an ordinary Q-function of `C + delta * R`.
    SharedGreedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub cost_discount: f64,
    pub risk_discount: f64,
    pub cost_hidden: Vec<usize>,
    pub risk_hidden: Vec<usize>,
    pub cost_optimizer: AdamConfig,
    pub risk_optimizer: AdamConfig,
    pub batch_size: usize,
    pub memory_capacity: usize,
    /// Iterations between target-network refreshes (both nets).
    pub replace_period: u64,
    pub explore: ExploreSchedule,
    pub delta_init: f64,
    pub delta_step: f64,
    pub episodes: usize,
    /// Iterations per episode.
    pub iterations: usize,
    pub filter_offset: f64,
    pub target_rule: TargetRule,
    /// Keep `delta` fixed instead of adapting it between episodes.
    pub freeze_delta: bool,
    /// Factors applied to cost and risk before they enter the replay
    /// memory. Greedy choices are unchanged when both are scaled alike.
    pub cost_scale: f64,
    pub risk_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            cost_discount: 0.99,
            risk_discount: 0.99,
            cost_hidden: vec![256, 128, 128, 64],
            risk_hidden: vec![512, 256, 128, 128],
            cost_optimizer: AdamConfig::default(),
            risk_optimizer: AdamConfig::default(),
            batch_size: 64,
            memory_capacity: 50_000,
            replace_period: 200,
            explore: ExploreSchedule::default(),
            delta_init: 0.0,
            delta_step: 0.5,
            episodes: 100,
            iterations: 35_000,
            filter_offset: FILTER_OFFSET,
            target_rule: TargetRule::SeparateMin,
            freeze_delta: false,
            cost_scale: 1.0,
            risk_scale: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cost_discount != self.risk_discount {
            return Err(Error::Config("cost and risk discounts must be equal".into()));
        }
        if !(0.0..1.0).contains(&self.cost_discount) {
            return Err(Error::Config("discount must lie in [0, 1)".into()));
        }
        self.cost_optimizer.validate()?;
        self.risk_optimizer.validate()?;
        if self.batch_size == 0 || self.memory_capacity < self.batch_size {
            return Err(Error::Config("need 0 < batch_size <= memory_capacity".into()));
        }
        if !(self.delta_step > 0.0) || self.delta_init < 0.0 {
            return Err(Error::Config("delta_step must be > 0 and delta_init >= 0".into()));
        }
        if self.iterations == 0 || self.episodes == 0 {
            return Err(Error::Config("episodes and iterations must be >= 1".into()));
        }
        if !(self.cost_scale > 0.0 && self.risk_scale > 0.0) {
            return Err(Error::Config("cost_scale and risk_scale must be positive".into()));
        }
        if self.replace_period == 0 {
            return Err(Error::Config("replace_period must be >= 1".into()));
        }
        if self.cost_hidden.contains(&0) || self.risk_hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Outer-loop weight update: up by `step` if the episode overspent, down
/// otherwise, never below zero.
pub fn update_delta(delta: f64, avg_energy: f64, budget: f64, step: f64) -> f64 {
    if avg_energy > budget {
        delta + step
    } else if delta - step < 1e-9 * step {
        // Snap to the floor so repeated +/- steps cannot leave rounding residue.
        0.0
    } else {
        delta - step
    }
}

/// Action choice from raw Q vectors: greedy on the filtered weighted sum
/// with probability `greedy_prob`, otherwise uniform over allowed actions.
pub fn choose_action<R: Rng + ?Sized>(
    q_cost: &[f64],
    q_risk: &[f64],
    mask: &ActionMask,
    delta: f64,
    greedy_prob: f64,
    offset: f64,
    rng: &mut R,
) -> usize {
    if rng.random::<f64>() < greedy_prob {
        greedy_index(q_cost, q_risk, mask, delta, offset)
    } else {
        uniform_allowed(mask, rng)
    }
}

pub fn greedy_index(q_cost: &[f64], q_risk: &[f64], mask: &ActionMask, delta: f64, offset: f64) -> usize {
    let combined: Vec<f64> = q_cost.iter().zip(q_risk).map(|(c, r)| c + delta * r).collect();
    argmin(&apply_filter(&combined, mask, offset))
}

/// What happened in one training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub episode: usize,
    /// Iteration within the episode.
    pub step: usize,
    /// Iteration counted across episodes.
    pub iteration: u64,
    pub action: usize,
    pub dest: Option<usize>,
    pub offloaded: u32,
    pub delay: f64,
    pub energy_spent: f64,
    pub dropped: u32,
    pub cost: f64,
    pub risk: f64,
    pub delta: f64,
    pub greedy_prob: f64,
    pub cost_loss: Option<f64>,
    pub risk_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: usize,
    pub avg_delay: f64,
    /// Final cumulative energy over the episode length.
    pub avg_energy: f64,
    pub avg_cost: f64,
    pub dropped: u64,
    /// Weight in force during the episode.
    pub delta: f64,
    pub next_delta: f64,
    pub greedy_prob: f64,
    pub mean_cost_loss: f64,
    pub mean_risk_loss: f64,
    pub offloaded: Vec<u64>,
}

/// Serializable agent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub config: AgentConfig,
    pub scenario_fingerprint: String,
    pub cost_q: QFunction,
    pub risk_q: QFunction,
    pub delta: f64,
    pub iteration: u64,
    pub episode: usize,
    pub rng: ChaCha8Rng,
    pub env_rng: ChaCha8Rng,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub struct DotsAgent {
    config: AgentConfig,
    space: ActionSpace,
    encoder: StateEncoder,
    scenario_fingerprint: String,
    cost_q: QFunction,
    risk_q: QFunction,
    memory: ReplayMemory,
    delta: f64,
    iteration: u64,
    episode: usize,
    state: EnvState,
    rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
}

impl DotsAgent {
    pub fn new(env: &Environment, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let space = ActionSpace::for_env(env);
        let encoder = StateEncoder::new(env, config.iterations);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let sizes = |hidden: &[usize]| -> Vec<usize> {
            std::iter::once(encoder.dim())
                .chain(hidden.iter().copied())
                .chain(std::iter::once(space.len()))
                .collect()
        };
        let cost_net = DenseNet::init(&sizes(&config.cost_hidden), &mut rng)?;
        let risk_net = DenseNet::init(&sizes(&config.risk_hidden), &mut rng)?;
        Ok(Self {
            cost_q: QFunction::new(cost_net, config.replace_period, config.cost_optimizer),
            risk_q: QFunction::new(risk_net, config.replace_period, config.risk_optimizer),
            memory: ReplayMemory::new(config.memory_capacity),
            delta: config.delta_init,
            iteration: 0,
            episode: 0,
            state: EnvState::initial(),
            scenario_fingerprint: env.scenario().fingerprint(),
            config,
            space,
            encoder,
            rng,
            env_rng,
        })
    }

    pub fn from_checkpoint(env: &Environment, ck: AgentCheckpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        let mut agent = Self::new(env, ck.config.clone(), 0)?;
        if agent.cost_q.nets.prediction.sizes() != ck.cost_q.nets.prediction.sizes()
            || agent.risk_q.nets.prediction.sizes() != ck.risk_q.nets.prediction.sizes()
        {
            return Err(Error::Config("checkpoint network shapes do not match the scenario".into()));
        }
        agent.scenario_fingerprint = ck.scenario_fingerprint;
        agent.cost_q = ck.cost_q;
        agent.risk_q = ck.risk_q;
        agent.delta = ck.delta;
        agent.iteration = ck.iteration;
        agent.episode = ck.episode;
        agent.rng = ck.rng;
        agent.env_rng = ck.env_rng;
        Ok(agent)
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            scenario_fingerprint: self.scenario_fingerprint.clone(),
            cost_q: self.cost_q.clone(),
            risk_q: self.risk_q.clone(),
            delta: self.delta,
            iteration: self.iteration,
            episode: self.episode,
            rng: self.rng.clone(),
            env_rng: self.env_rng.clone(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn encoder(&self) -> &StateEncoder {
        &self.encoder
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn set_delta(&mut self, delta: f64) {
        self.delta = delta.max(0.0);
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn cost_q(&self) -> &QFunction {
        &self.cost_q
    }

    pub fn risk_q(&self) -> &QFunction {
        &self.risk_q
    }

    pub fn greedy_probability(&self) -> f64 {
        self.config.explore.greedy_probability(self.iteration)
    }

    /// Greedy action for already-encoded features.
    pub fn greedy_action(&self, features: &[f64], mask: &ActionMask) -> Result<usize> {
        let qc = self.cost_q.predict(features)?;
        let qr = self.risk_q.predict(features)?;
        Ok(greedy_index(&qc, &qr, mask, self.delta, self.config.filter_offset))
    }

    /// Epsilon-greedy choice at the current schedule point.
    pub fn select_action(&mut self, features: &[f64], mask: &ActionMask) -> Result<usize> {
        let qc = self.cost_q.predict(features)?;
        let qr = self.risk_q.predict(features)?;
        let p = self.greedy_probability();
        Ok(choose_action(&qc, &qr, mask, self.delta, p, self.config.filter_offset, &mut self.rng))
    }

    /// Bootstrap targets `(y, y_risk)` from the target networks.
    pub fn compute_targets(&self, batch: &[&Transition]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut y = Vec::with_capacity(batch.len());
        let mut y_risk = Vec::with_capacity(batch.len());
        let off = self.config.filter_offset;
        for t in batch {
            let mask = ActionMask { allowed: t.next_mask.clone() };
            let qc = apply_filter(&self.cost_q.target(&t.next_state)?, &mask, off);
            let qr = apply_filter(&self.risk_q.target(&t.next_state)?, &mask, off);
            let (next_c, next_r) = match self.config.target_rule {
                TargetRule::SeparateMin => (qc[argmin(&qc)], qr[argmin(&qr)]),
                TargetRule::SharedGreedy => {
                    let combined: Vec<f64> = qc.iter().zip(&qr).map(|(c, r)| c + self.delta * r).collect();
                    let a = argmin(&combined);
                    (qc[a], qr[a])
                }
            };
            y.push(t.cost + self.config.cost_discount * next_c);
            y_risk.push(t.risk + self.config.risk_discount * next_r);
        }
        Ok((y, y_risk))
    }

    /// Restarts the environment for a new episode.
    pub fn reset_episode(&mut self) {
        self.state = EnvState::initial();
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// One environment step, one replay update of each Q-function, and a
    /// target refresh when the period comes up.
    pub fn train_iteration(&mut self, env: &Environment, step: usize) -> Result<IterationRecord> {
        let features = self.encoder.encode(&self.state);
        let mask = self.space.mask(env, &self.state);
        let greedy_prob = self.greedy_probability();
        let action = self.select_action(&features, &mask)?;
        let out = env.step(&self.state, self.space.get(action), &mut self.env_rng)?;
        let sig = mdp::signal(&out, env.scenario().drop_penalty, env.budget());
        let next_features = self.encoder.encode(&out.next);
        let next_mask = self.space.mask(env, &out.next);
        self.memory.push(Transition {
            state: features,
            action,
            cost: sig.cost * self.config.cost_scale,
            risk: sig.risk * self.config.risk_scale,
            next_state: next_features,
            next_mask: next_mask.allowed,
        });

        let (mut cost_loss, mut risk_loss) = (None, None);
        if self.memory.len() >= self.config.batch_size {
            let idx = self.memory.sample_indices(self.config.batch_size, &mut self.rng);
            let batch: Vec<&Transition> = idx.iter().map(|&i| self.memory.get(i)).collect();
            let (y, y_risk) = self.compute_targets(&batch)?;
            let inputs: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
            let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
            let lc = self.cost_q.td_train_step(&inputs, &actions, &y).map_err(|e| self.diverged(e))?;
            let lr = self.risk_q.td_train_step(&inputs, &actions, &y_risk).map_err(|e| self.diverged(e))?;
            cost_loss = Some(lc);
            risk_loss = Some(lr);
        }

        self.iteration += 1;
        self.cost_q.nets.maybe_replace(self.iteration);
        self.risk_q.nets.maybe_replace(self.iteration);

        let record = IterationRecord {
            episode: self.episode,
            step,
            iteration: self.iteration,
            action,
            dest: out.dest,
            offloaded: out.offloaded,
            delay: out.epoch_delay,
            energy_spent: out.energy_spent,
            dropped: out.dropped,
            cost: sig.cost,
            risk: sig.risk,
            delta: self.delta,
            greedy_prob,
            cost_loss,
            risk_loss,
        };
        self.state = out.next;
        Ok(record)
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::Divergence(msg) => Error::Divergence(format!(
                "{msg}; episode {} iteration {} delta {} state {:?}",
                self.episode, self.iteration, self.delta, self.state
            )),
            other => other,
        }
    }

    /// Runs one episode of `config.iterations` steps, then adapts `delta`.
    pub fn run_episode(
        &mut self,
        env: &Environment,
        on_iteration: &mut dyn FnMut(&IterationRecord),
    ) -> Result<EpisodeReport> {
        self.reset_episode();
        let t_len = self.config.iterations;
        let delta = self.delta;
        let (mut delay, mut cost, mut dropped) = (0.0, 0.0, 0u64);
        let (mut lc_sum, mut lr_sum, mut n_loss) = (0.0, 0.0, 0usize);
        let mut offloaded = vec![0u64; env.num_bs() + 1];
        for step in 0..t_len {
            let rec = self.train_iteration(env, step)?;
            delay += rec.delay;
            cost += rec.cost;
            dropped += rec.dropped as u64;
            if let Some(d) = rec.dest {
                offloaded[d] += rec.offloaded as u64;
            }
            if let (Some(a), Some(b)) = (rec.cost_loss, rec.risk_loss) {
                lc_sum += a;
                lr_sum += b;
                n_loss += 1;
            }
            on_iteration(&rec);
        }
        let avg_energy = self.state.energy / t_len as f64;
        let next_delta = if self.config.freeze_delta {
            delta
        } else {
            update_delta(delta, avg_energy, env.budget(), self.config.delta_step)
        };
        self.delta = next_delta;
        let report = EpisodeReport {
            episode: self.episode,
            avg_delay: delay / t_len as f64,
            avg_energy,
            avg_cost: cost / t_len as f64,
            dropped,
            delta,
            next_delta,
            greedy_prob: self.greedy_probability(),
            mean_cost_loss: if n_loss > 0 { lc_sum / n_loss as f64 } else { 0.0 },
            mean_risk_loss: if n_loss > 0 { lr_sum / n_loss as f64 } else { 0.0 },
            offloaded,
        };
        self.episode += 1;
        Ok(report)
    }

    /// Runs the configured number of episodes.
    pub fn run(
        &mut self,
        env: &Environment,
        on_iteration: &mut dyn FnMut(&IterationRecord),
        on_episode: &mut dyn FnMut(&EpisodeReport),
    ) -> Result<Vec<EpisodeReport>> {
        let mut reports = Vec::with_capacity(self.config.episodes);
        for _ in 0..self.config.episodes {
            let r = self.run_episode(env, on_iteration)?;
            on_episode(&r);
            reports.push(r);
        }
        Ok(reports)
    }

    /// Greedy policy view for evaluation rollouts.
    pub fn greedy_policy(&self) -> GreedyPolicy<'_> {
        GreedyPolicy { agent: self }
    }
}

/// The learned policy acting greedily (no exploration).
pub struct GreedyPolicy<'a> {
    agent: &'a DotsAgent,
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, _env: &Environment, state: &EnvState, mask: &ActionMask, _rng: &mut ChaCha8Rng) -> Result<usize> {
        let x = self.agent.encoder.encode(state);
        self.agent.greedy_action(&x, mask)
    }
}
