//! Reference policies: uniform random choice (RPC) and a fixed
//! probabilistic table calibrated by simulation to meet the energy budget
//! (SPC).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Environment, SATELLITE};
use crate::error::{Error, Result};
use crate::mdp::{Action, ActionMask, ActionSpace};
use crate::policy::{rollout, uniform_allowed, Policy};

/// Uniform choice among allowed actions.
pub fn rpc_policy<R: Rng + ?Sized>(mask: &ActionMask, rng: &mut R) -> usize {
    uniform_allowed(mask, rng)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RpcPolicy;

impl Policy for RpcPolicy {
    fn act(&mut self, _env: &Environment, _state: &EnvState, mask: &ActionMask, rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(rpc_policy(mask, rng))
    }
}

/// States sharing a forwarding flag and a set of covering base stations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateClass {
    pub forwarding: bool,
    pub coverage: Vec<usize>,
}

impl StateClass {
    pub fn of(env: &Environment, state: &EnvState) -> Self {
        Self {
            forwarding: state.forwarding(),
            coverage: env.available_set(state.loc).into_iter().filter(|&d| d != SATELLITE).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub class: StateClass,
    /// `(action index, probability)`, summing to one.
    pub actions: Vec<(usize, f64)>,
}

/// Frozen per-class action probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcTable {
    /// Total probability of offloading in a class where offloading is possible.
    pub intensity: f64,
    pub classes: Vec<ClassDistribution>,
    pub samples: usize,
    pub achieved_energy: f64,
    pub scenario_fingerprint: String,
}

impl SpcTable {
    /// Table for a given offload intensity; idle takes the rest.
    pub fn for_intensity(env: &Environment, intensity: f64) -> Self {
        let space = ActionSpace::for_env(env);
        let mut classes: BTreeMap<StateClass, Vec<(usize, f64)>> = BTreeMap::new();
        for loc in 0..env.num_waypoints() {
            for forwarding in [false, true] {
                let probe = EnvState { loc, fwd_bits: if forwarding { 1.0 } else { 0.0 }, ..EnvState::initial() };
                let class = StateClass::of(env, &probe);
                if classes.contains_key(&class) {
                    continue;
                }
                let dists = if forwarding {
                    vec![(0, 1.0)]
                } else {
                    let offloads: Vec<usize> = space
                        .actions()
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| match a {
                            Action::Idle => false,
                            Action::Offload { dest, .. } => *dest == SATELLITE || class.coverage.contains(dest),
                        })
                        .map(|(i, _)| i)
                        .collect();
                    let each = intensity / offloads.len() as f64;
                    std::iter::once((0, 1.0 - intensity)).chain(offloads.into_iter().map(|i| (i, each))).collect()
                };
                classes.insert(class, dists);
            }
        }
        Self {
            intensity,
            classes: classes.into_iter().map(|(class, actions)| ClassDistribution { class, actions }).collect(),
            samples: 0,
            achieved_energy: f64::NAN,
            scenario_fingerprint: env.scenario().fingerprint(),
        }
    }

    pub fn distribution(&self, class: &StateClass) -> Option<&[(usize, f64)]> {
        self.classes.iter().find(|c| &c.class == class).map(|c| c.actions.as_slice())
    }
}

/// Samples from the class distribution restricted to the mask.
pub fn spc_policy<R: Rng + ?Sized>(
    table: &SpcTable,
    env: &Environment,
    state: &EnvState,
    mask: &ActionMask,
    rng: &mut R,
) -> usize {
    let class = StateClass::of(env, state);
    let Some(dist) = table.distribution(&class) else {
        return 0;
    };
    let total: f64 = dist.iter().filter(|(a, _)| mask.is_allowed(*a)).map(|(_, p)| p).sum();
    if total <= 0.0 {
        return 0;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for &(a, p) in dist {
        if !mask.is_allowed(a) || p == 0.0 {
            continue;
        }
        last = a;
        if u < p {
            return a;
        }
        u -= p;
    }
    last
}

pub struct SpcPolicy<'a> {
    pub table: &'a SpcTable,
}

impl Policy for SpcPolicy<'_> {
    fn act(&mut self, env: &Environment, state: &EnvState, mask: &ActionMask, rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(spc_policy(self.table, env, state, mask, rng))
    }
}

/// Grid step of the intensity search.
pub const SPC_GRID_STEP: f64 = 0.01;

/// Largest intensity on the grid whose simulated mean per-epoch energy over
/// `num_flights` consecutive flights stays within `budget`. Every grid
/// point sees the same random streams.
pub fn spc_calibrate(env: &Environment, budget: f64, num_flights: usize, seed: u64) -> Result<SpcTable> {
    if num_flights == 0 {
        return Err(Error::Config("SPC calibration needs at least one flight".into()));
    }
    let epochs = num_flights * env.num_waypoints();
    let steps = (1.0 / SPC_GRID_STEP).round() as usize;
    let energies: Vec<(f64, f64)> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let p = i as f64 * SPC_GRID_STEP;
            let table = SpcTable::for_intensity(env, p);
            let mut arrivals = ChaCha8Rng::seed_from_u64(seed);
            let mut choices = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let stats = rollout(env, &mut SpcPolicy { table: &table }, EnvState::initial(), epochs, &mut arrivals, &mut choices)?;
            Ok((p, stats.mean_energy))
        })
        .collect::<Result<_>>()?;
    let best = energies.iter().rev().find(|(_, e)| *e <= budget);
    match best {
        Some(&(p, e)) => {
            let mut table = SpcTable::for_intensity(env, p);
            table.samples = num_flights;
            table.achieved_energy = e;
            Ok(table)
        }
        None => Err(Error::CalibrationInfeasible(format!(
            "even never offloading uses {:.4} J per epoch, above the budget {budget}",
            energies[0].1
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Scenario;

    #[test]
    fn rpc_only_idle() {
        let mask = ActionMask { allowed: vec![true, false, false] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(rpc_policy(&mask, &mut rng), 0);
        }
    }

    #[test]
    fn rpc_frequencies_are_uniform() {
        let mask = ActionMask::all(43);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let mut counts = vec![0u32; 43];
        for _ in 0..n {
            counts[rpc_policy(&mask, &mut rng)] += 1;
        }
        let p = 1.0 / 43.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.5 * sd);
        }
    }

    #[test]
    fn class_distributions_sum_to_one() {
        let env = Environment::new(Scenario::default()).unwrap();
        let t = SpcTable::for_intensity(&env, 0.37);
        for c in &t.classes {
            let s: f64 = c.actions.iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spc_single_allowed_action() {
        let env = Environment::new(Scenario::default()).unwrap();
        let t = SpcTable::for_intensity(&env, 1.0);
        let mut mask = ActionMask { allowed: vec![false; 43] };
        mask.allowed[3] = true;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = EnvState { backlog: 5, ..EnvState::initial() };
        for _ in 0..50 {
            assert_eq!(spc_policy(&t, &env, &state, &mask, &mut rng), 3);
        }
    }

    #[test]
    fn calibration_extremes() {
        let env = Environment::new(Scenario::tiny()).unwrap();
        let loose = spc_calibrate(&env, 1e9, 50, 3).unwrap();
        assert_eq!(loose.intensity, 1.0);
        match spc_calibrate(&env, 0.001, 50, 3) {
            Err(Error::CalibrationInfeasible(_)) => {}
            other => panic!("{other:?}"),
        }
    }
}
