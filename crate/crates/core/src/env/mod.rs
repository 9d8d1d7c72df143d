//! Epoch-based simulation of one UAV collecting IoT tasks and scheduling
//! them to local compute, a covering base station, or the satellite.
//!
//! Each [`Environment::step`] runs one epoch:
//! 1. the forwarding queue drains at the rate of the link its content was
//!    enqueued on;
//! 2. an offload action moves `beta` tasks into the forwarding queue (only
//!    legal when it was empty at the start of the epoch);
//! 3. the computing queue processes, queues and admits new arrivals;
//! 4. delay and energy are charged, and the UAV moves to the next waypoint.

pub mod arrivals;
pub mod model;
pub mod params;
pub mod scenario;
pub mod trajectory;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use arrivals::{ArrivalProcess, ArrivalSampler};
pub use params::{ComputeParams, EnergyParams, PathlossCoeffs, RadioParams, TaskClass};
pub use scenario::Scenario;
pub use trajectory::{BsLink, CoverageRun, Trajectory, Waypoint};

use crate::error::{Error, Result};
use crate::mdp::Action;

/// Destination index of the satellite.
pub const SATELLITE: usize = 0;

/// Simulator state at the start of an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Waypoint index.
    pub loc: usize,
    /// Bits still waiting in the forwarding queue.
    pub fwd_bits: f64,
    /// Link the forwarding queue is draining on.
    pub fwd_dest: Option<usize>,
    /// Rate (bits/s) of that link, fixed when the content was enqueued.
    pub fwd_rate: f64,
    /// Tasks in the computing queue.
    pub backlog: u32,
    /// Cumulative energy, J.
    pub energy: f64,
    pub epoch: u64,
}

impl EnvState {
    pub fn initial() -> Self {
        Self {
            loc: 0,
            fwd_bits: 0.0,
            fwd_dest: None,
            fwd_rate: 0.0,
            backlog: 0,
            energy: 0.0,
            epoch: 0,
        }
    }

    /// True while earlier offloads are still being transmitted.
    pub fn forwarding(&self) -> bool {
        self.fwd_bits > 0.0
    }
}

/// Everything observed from one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next: EnvState,
    /// Total delay charged to this epoch, seconds.
    pub epoch_delay: f64,
    pub dropped: u32,
    /// Communication plus computing energy of this epoch, J.
    pub energy_spent: f64,
    pub comm_energy: f64,
    pub comp_energy: f64,
    pub arrivals: u32,
    /// Tasks left waiting in the computing queue.
    pub queued: u32,
    pub processed: u32,
    pub offloaded: u32,
    pub dest: Option<usize>,
}

/// A scenario with its link rates precomputed.
#[derive(Debug, Clone)]
pub struct Environment {
    scenario: Scenario,
    sat_rate: f64,
    /// Per waypoint: (bs, rate) for each covering BS.
    bs_rates: Vec<Vec<(usize, f64)>>,
    local_capacity: u32,
    sampler: ArrivalSampler,
}

impl Environment {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let sat_rate = model::sat_rate(&scenario.radio);
        let bs_rates = scenario
            .trajectory
            .waypoints
            .iter()
            .map(|wp| {
                wp.links
                    .iter()
                    .map(|l| {
                        let pl = model::bs_pathloss(&scenario.radio.pathloss, l.distance_m, l.elevation_deg)?;
                        Ok((l.bs, model::bs_rate_for_pathloss(&scenario.radio, pl)))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let local_capacity = model::local_capacity(&scenario.tasks, scenario.compute.f_uav, scenario.epoch_len);
        let sampler = scenario.arrivals.sampler();
        Ok(Self {
            scenario,
            sat_rate,
            bs_rates,
            local_capacity,
            sampler,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn arrival_sampler(&self) -> &ArrivalSampler {
        &self.sampler
    }

    pub fn num_waypoints(&self) -> usize {
        self.scenario.trajectory.len()
    }

    pub fn num_bs(&self) -> usize {
        self.scenario.num_bs()
    }

    pub fn budget(&self) -> f64 {
        self.scenario.energy.budget
    }

    /// Tasks the UAV completes per epoch.
    pub fn local_capacity(&self) -> u32 {
        self.local_capacity
    }

    pub fn available_set(&self, loc: usize) -> Vec<usize> {
        self.scenario.trajectory.waypoint(loc).available_set()
    }

    pub fn is_available(&self, loc: usize, dest: usize) -> bool {
        dest == SATELLITE || self.scenario.trajectory.waypoint(loc).covers(dest)
    }

    pub fn sat_rate(&self) -> f64 {
        self.sat_rate
    }

    /// UAV-BS `n` rate at waypoint `loc`.
    pub fn bs_rate(&self, loc: usize, n: usize) -> Result<f64> {
        let loc = loc % self.num_waypoints();
        self.bs_rates[loc]
            .iter()
            .find(|(bs, _)| *bs == n && n != SATELLITE)
            .map(|&(_, r)| r)
            .ok_or(Error::UnavailableDestination { dest: n, loc })
    }

    /// Rate towards any available destination.
    pub fn rate(&self, loc: usize, dest: usize) -> Result<f64> {
        if dest == SATELLITE {
            Ok(self.sat_rate)
        } else {
            self.bs_rate(loc, dest)
        }
    }

    fn capability(&self, dest: usize) -> Result<f64> {
        if dest == SATELLITE {
            Ok(self.scenario.compute.f_sat)
        } else {
            self.scenario
                .compute
                .f_bs
                .get(dest.wrapping_sub(1))
                .copied()
                .ok_or_else(|| Error::InvalidAction(format!("no destination {dest}")))
        }
    }

    /// Remote compute delay; `dest = None` is the no-offload choice.
    pub fn offload_compute_delay(&self, dest: Option<usize>, beta: u32) -> Result<f64> {
        match dest {
            None if beta > 0 => Err(Error::InvalidAction(format!("beta = {beta} without a destination"))),
            None => Ok(0.0),
            Some(d) => Ok(model::offload_compute_delay(&self.scenario.tasks, self.capability(d)?, beta)),
        }
    }

    pub fn queue_update(&self, backlog: u32, beta: u32, arrivals: u32) -> Result<model::QueueUpdate> {
        model::queue_update(backlog, beta, arrivals, self.local_capacity, self.scenario.queue_capacity)
    }

    pub fn local_delay(&self, backlog: u32, queued: u32) -> f64 {
        model::local_delay(
            &self.scenario.tasks,
            self.scenario.compute.f_uav,
            self.scenario.epoch_len,
            self.local_capacity,
            backlog,
            queued,
        )
    }

    /// Transmission delay from waypoint `loc`, including the satellite
    /// propagation delay.
    pub fn tx_delay(&self, loc: usize, dest: usize, beta: u32) -> Result<f64> {
        let rate = self.rate(loc, dest)?;
        let prop = if dest == SATELLITE { self.scenario.radio.sat_prop_delay } else { 0.0 };
        Ok(model::tx_delay(&self.scenario.tasks, beta, rate, prop))
    }

    /// Rates of BS `n` over the coverage window starting at `loc`.
    fn coverage_rates(&self, loc: usize, n: usize) -> Result<Vec<f64>> {
        let link = self
            .scenario
            .trajectory
            .waypoint(loc)
            .link(n)
            .ok_or(Error::UnavailableDestination { dest: n, loc })?;
        (0..link.coverage_remaining as usize).map(|k| self.bs_rate(loc + k, n)).collect()
    }

    /// Epochs BS `n` needs to receive `beta` tasks offloaded at `loc`, if it
    /// can within the remaining coverage.
    pub fn bs_epochs_needed(&self, loc: usize, n: usize, beta: u32) -> Result<Option<usize>> {
        let rates = self.coverage_rates(loc, n)?;
        Ok(model::epochs_to_send(
            beta as f64 * self.scenario.tasks.phi,
            &rates,
            self.scenario.epoch_len,
        ))
    }

    /// Largest offload count to BS `n` that completes before the UAV leaves
    /// its coverage; 0 when not even one task fits or `n` is not covering.
    pub fn feasible_beta_max(&self, loc: usize, n: usize) -> u32 {
        if n == SATELLITE {
            return self.scenario.beta_max;
        }
        let Ok(rates) = self.coverage_rates(loc, n) else {
            return 0;
        };
        let tau = self.scenario.epoch_len;
        let phi = self.scenario.tasks.phi;
        (1..=self.scenario.beta_max)
            .rev()
            .find(|&b| model::epochs_to_send(b as f64 * phi, &rates, tau).is_some())
            .unwrap_or(0)
    }

    pub fn comm_energy(&self, loc: usize, dest: usize, beta: u32) -> Result<f64> {
        let rate = self.rate(loc, dest)?;
        let power = if dest == SATELLITE { self.scenario.radio.p_sat } else { self.scenario.radio.p_bs };
        Ok(model::comm_energy(&self.scenario.tasks, power, beta, rate))
    }

    pub fn comp_energy(&self, backlog: u32) -> f64 {
        model::comp_energy(
            &self.scenario.tasks,
            self.scenario.compute.f_uav,
            self.scenario.epoch_len,
            self.scenario.energy.kappa,
            backlog,
        )
    }

    pub fn sample_arrivals<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.sampler.sample(rng)
    }

    /// Whether `action` is legal in `state`; the error says why not.
    pub fn check_action(&self, state: &EnvState, action: Action) -> Result<()> {
        let Action::Offload { dest, count } = action else {
            return Ok(());
        };
        if count == 0 {
            return Err(Error::InvalidAction("offload with zero tasks".into()));
        }
        if state.forwarding() {
            return Err(Error::InvalidAction(format!(
                "forwarding queue busy ({} bits left)",
                state.fwd_bits
            )));
        }
        if count > self.scenario.beta_max {
            return Err(Error::InvalidAction(format!(
                "offload of {count} exceeds beta_max {}",
                self.scenario.beta_max
            )));
        }
        if count > state.backlog {
            return Err(Error::InvalidAction(format!(
                "offload of {count} exceeds backlog {}",
                state.backlog
            )));
        }
        if !self.is_available(state.loc, dest) {
            return Err(Error::UnavailableDestination {
                dest,
                loc: state.loc % self.num_waypoints(),
            });
        }
        if dest != SATELLITE {
            let max = self.feasible_beta_max(state.loc, dest);
            if count > max {
                return Err(Error::InvalidAction(format!(
                    "offload of {count} to BS {dest} cannot finish within coverage (max {max})"
                )));
            }
        }
        Ok(())
    }

    /// One epoch with a given arrival count.
    pub fn step_with_arrivals(&self, state: &EnvState, action: Action, arrivals: u32) -> Result<StepOutcome> {
        self.check_action(state, action)?;
        let tau = self.scenario.epoch_len;
        let phi = self.scenario.tasks.phi;

        let mut next = state.clone();

        let (dest, beta) = match action {
            Action::Idle => (None, 0),
            Action::Offload { dest, count } => (Some(dest), count),
        };

        let mut comm_energy = 0.0;
        let mut remote_delay = 0.0;
        if let Some(d) = dest {
            let rate = self.rate(state.loc, d)?;
            next.fwd_bits = beta as f64 * phi;
            next.fwd_dest = Some(d);
            next.fwd_rate = rate;
            remote_delay = self.offload_compute_delay(dest, beta)? + self.tx_delay(state.loc, d, beta)?;
            comm_energy = self.comm_energy(state.loc, d, beta)?;
        }

        // The radio sends for the whole epoch, including the one in which
        // the tasks were handed over.
        if next.fwd_bits > 0.0 {
            next.fwd_bits -= next.fwd_rate * tau;
            if next.fwd_bits <= 0.0 {
                next.fwd_bits = 0.0;
                next.fwd_dest = None;
                next.fwd_rate = 0.0;
            }
        }

        let q = self.queue_update(state.backlog, beta, arrivals)?;
        let epoch_delay = remote_delay + self.local_delay(state.backlog, q.queued);
        let comp_energy = self.comp_energy(state.backlog);
        let energy_spent = comm_energy + comp_energy;

        next.backlog = q.next_backlog;
        next.energy = state.energy + energy_spent;
        next.loc = self.scenario.trajectory.next(state.loc);
        next.epoch = state.epoch + 1;

        Ok(StepOutcome {
            next,
            epoch_delay,
            dropped: q.dropped,
            energy_spent,
            comm_energy,
            comp_energy,
            arrivals,
            queued: q.queued,
            processed: q.processed,
            offloaded: beta,
            dest,
        })
    }

    /// One epoch with arrivals drawn from `rng`.
    pub fn step<R: Rng + ?Sized>(&self, state: &EnvState, action: Action, rng: &mut R) -> Result<StepOutcome> {
        // Validate before drawing so a rejected action leaves the stream untouched.
        self.check_action(state, action)?;
        let m = self.sample_arrivals(rng);
        self.step_with_arrivals(state, action, m)
    }
}
