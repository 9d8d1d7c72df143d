//! Fixed policies and closed-loop rollouts with per-flight aggregates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Environment, StepOutcome};
use crate::error::Result;
use crate::mdp::{self, ActionMask, ActionSpace};

/// Chooses an action index given the current state and its mask.
pub trait Policy {
    fn act(&mut self, env: &Environment, state: &EnvState, mask: &ActionMask, rng: &mut ChaCha8Rng) -> Result<usize>;
}

/// Uniform choice among allowed actions.
pub fn uniform_allowed<R: Rng + ?Sized>(mask: &ActionMask, rng: &mut R) -> usize {
    let allowed = mask.allowed_indices();
    allowed[rng.random_range(0..allowed.len())]
}

/// Delay and energy of one trajectory loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightStats {
    /// Mean per-epoch delay over the flight, seconds.
    pub delay: f64,
    /// Mean per-epoch energy over the flight, J.
    pub energy: f64,
    pub dropped: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub epochs: usize,
    pub mean_delay: f64,
    pub mean_cost: f64,
    /// Cumulative energy divided by the number of epochs.
    pub mean_energy: f64,
    pub dropped: u64,
    /// Tasks offloaded to each destination (index 0 = satellite).
    pub offloaded: Vec<u64>,
    pub processed_locally: u64,
    pub flights: Vec<FlightStats>,
    pub final_state: EnvState,
}

/// Accumulates per-epoch outcomes into rollout and flight statistics.
#[derive(Debug, Clone)]
pub struct RolloutAccumulator {
    flight_len: usize,
    drop_penalty: f64,
    epochs: usize,
    delay: f64,
    cost: f64,
    energy: f64,
    dropped: u64,
    offloaded: Vec<u64>,
    processed: u64,
    flights: Vec<FlightStats>,
    cur: (f64, f64, u32, usize),
}

impl RolloutAccumulator {
    pub fn new(env: &Environment) -> Self {
        Self {
            flight_len: env.num_waypoints(),
            drop_penalty: env.scenario().drop_penalty,
            epochs: 0,
            delay: 0.0,
            cost: 0.0,
            energy: 0.0,
            dropped: 0,
            offloaded: vec![0; env.num_bs() + 1],
            processed: 0,
            flights: Vec::new(),
            cur: (0.0, 0.0, 0, 0),
        }
    }

    pub fn push(&mut self, out: &StepOutcome) {
        self.epochs += 1;
        self.delay += out.epoch_delay;
        self.cost += mdp::cost(out, self.drop_penalty);
        self.energy += out.energy_spent;
        self.dropped += out.dropped as u64;
        self.processed += out.processed as u64;
        if let Some(d) = out.dest {
            self.offloaded[d] += out.offloaded as u64;
        }
        self.cur.0 += out.epoch_delay;
        self.cur.1 += out.energy_spent;
        self.cur.2 += out.dropped;
        self.cur.3 += 1;
        if self.cur.3 == self.flight_len {
            let n = self.cur.3 as f64;
            self.flights.push(FlightStats {
                delay: self.cur.0 / n,
                energy: self.cur.1 / n,
                dropped: self.cur.2,
            });
            self.cur = (0.0, 0.0, 0, 0);
        }
    }

    pub fn finish(self, final_state: EnvState) -> RolloutStats {
        let n = self.epochs.max(1) as f64;
        RolloutStats {
            epochs: self.epochs,
            mean_delay: self.delay / n,
            mean_cost: self.cost / n,
            mean_energy: self.energy / n,
            dropped: self.dropped,
            offloaded: self.offloaded,
            processed_locally: self.processed,
            flights: self.flights,
            final_state,
        }
    }
}

/// Runs `policy` for `epochs` steps from `start`. Arrivals and policy
/// randomness come from separate streams so different policies can share
/// an arrival sequence.
pub fn rollout<P: Policy + ?Sized>(
    env: &Environment,
    policy: &mut P,
    start: EnvState,
    epochs: usize,
    arrivals_rng: &mut ChaCha8Rng,
    policy_rng: &mut ChaCha8Rng,
) -> Result<RolloutStats> {
    let space = ActionSpace::for_env(env);
    let mut acc = RolloutAccumulator::new(env);
    let mut state = start;
    for _ in 0..epochs {
        let mask = space.mask(env, &state);
        let a = policy.act(env, &state, &mask, policy_rng)?;
        let out = env.step(&state, space.get(a), arrivals_rng)?;
        acc.push(&out);
        state = out.next;
    }
    Ok(acc.finish(state))
}

/// Random policy: every allowed action equally likely.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn act(&mut self, _env: &Environment, _state: &EnvState, mask: &ActionMask, rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(uniform_allowed(mask, rng))
    }
}

/// Always the first allowed action, i.e. never offload.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&mut self, _env: &Environment, _state: &EnvState, _mask: &ActionMask, _rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(0)
    }
}
