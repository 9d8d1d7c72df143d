//! The constrained MDP seen by the learners: the fixed action list, the
//! per-state action mask, cost and risk signals, and the network input
//! encoding.

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Environment, StepOutcome};

/// Scheduling decision for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Keep everything on the UAV.
    Idle,
    /// Move `count` tasks to destination `dest` (0 = satellite, n = BS n).
    Offload { dest: usize, count: u32 },
}

impl Action {
    /// Destination index, -1 for no offload.
    pub fn alpha(&self) -> i64 {
        match self {
            Action::Idle => -1,
            Action::Offload { dest, .. } => *dest as i64,
        }
    }

    pub fn beta(&self) -> u32 {
        match self {
            Action::Idle => 0,
            Action::Offload { count, .. } => *count,
        }
    }
}

/// The enumerated action list. Order is a stable contract:
/// `(-1,0)`, then `(0,1..=beta_max)`, then `(n,1..=beta_max)` per BS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    actions: Vec<Action>,
    beta_max: u32,
    num_bs: usize,
}

impl ActionSpace {
    pub fn new(num_bs: usize, beta_max: u32) -> Self {
        let mut actions = Vec::with_capacity(1 + (num_bs + 1) * beta_max as usize);
        actions.push(Action::Idle);
        for dest in 0..=num_bs {
            for count in 1..=beta_max {
                actions.push(Action::Offload { dest, count });
            }
        }
        Self { actions, beta_max, num_bs }
    }

    pub fn for_env(env: &Environment) -> Self {
        Self::new(env.num_bs(), env.scenario().beta_max)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn index_of(&self, action: Action) -> Option<usize> {
        match action {
            Action::Idle => Some(0),
            Action::Offload { dest, count } => {
                if dest > self.num_bs || count == 0 || count > self.beta_max {
                    None
                } else {
                    Some(1 + dest * self.beta_max as usize + (count - 1) as usize)
                }
            }
        }
    }

    /// Allowed actions in `state`.
    pub fn mask(&self, env: &Environment, state: &EnvState) -> ActionMask {
        let mut allowed = vec![false; self.len()];
        allowed[0] = true;
        if !state.forwarding() && state.backlog > 0 {
            let cap = state.backlog.min(self.beta_max);
            for dest in env.available_set(state.loc) {
                let limit = if dest == crate::env::SATELLITE {
                    cap
                } else {
                    cap.min(env.feasible_beta_max(state.loc, dest))
                };
                for count in 1..=limit {
                    if let Some(i) = self.index_of(Action::Offload { dest, count }) {
                        allowed[i] = true;
                    }
                }
            }
        }
        ActionMask { allowed }
    }
}

/// One flag per enumerated action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask {
    pub allowed: Vec<bool>,
}

impl ActionMask {
    pub fn all(len: usize) -> Self {
        Self { allowed: vec![true; len] }
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn is_allowed(&self, i: usize) -> bool {
        self.allowed[i]
    }

    pub fn allowed_indices(&self) -> Vec<usize> {
        self.allowed
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }
}

/// Per-epoch learning signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRiskSignal {
    pub cost: f64,
    pub risk: f64,
    /// The post-step state is an error state (energy over the scaled budget).
    pub error_flag: bool,
}

/// Delay plus `drop_penalty` per dropped task.
pub fn cost(outcome: &StepOutcome, drop_penalty: f64) -> f64 {
    outcome.epoch_delay + drop_penalty * outcome.dropped as f64
}

/// Energy overshoot of `state` against `budget * epoch`; zero when within.
pub fn risk(state: &EnvState, budget: f64) -> f64 {
    let allowance = budget * state.epoch as f64;
    if state.energy > allowance {
        state.energy - allowance
    } else {
        0.0
    }
}

pub fn signal(outcome: &StepOutcome, drop_penalty: f64, budget: f64) -> CostRiskSignal {
    let r = risk(&outcome.next, budget);
    CostRiskSignal {
        cost: cost(outcome, drop_penalty),
        risk: r,
        error_flag: r > 0.0,
    }
}

/// Maps simulator states to network inputs:
/// `[one-hot waypoint.., forwarding flag, forwarding fill, backlog / rho,
///   E / (budget * T), t / T, (E - budget * t) / (budget * T)]`
/// where `T` is the episode length.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoder {
    waypoints: usize,
    rho: f64,
    fwd_scale: f64,
    energy_scale: f64,
    budget: f64,
    horizon: f64,
}

impl StateEncoder {
    pub fn new(env: &Environment, episode_len: usize) -> Self {
        let s = env.scenario();
        let horizon = episode_len.max(1) as f64;
        Self {
            waypoints: env.num_waypoints(),
            rho: s.queue_capacity as f64,
            fwd_scale: s.beta_max as f64 * s.tasks.phi,
            energy_scale: s.energy.budget * horizon,
            budget: s.energy.budget,
            horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.waypoints + 6
    }

    pub fn encode(&self, state: &EnvState) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.encode_into(state, &mut x);
        x
    }

    pub fn encode_into(&self, state: &EnvState, x: &mut [f64]) {
        x.fill(0.0);
        let w = self.waypoints;
        x[state.loc % w] = 1.0;
        x[w] = if state.forwarding() { 1.0 } else { 0.0 };
        x[w + 1] = state.fwd_bits / self.fwd_scale;
        x[w + 2] = state.backlog as f64 / self.rho;
        x[w + 3] = state.energy / self.energy_scale;
        let t = state.epoch as f64;
        x[w + 4] = t / self.horizon;
        x[w + 5] = (state.energy - self.budget * t) / self.energy_scale;
    }
}
