//! Scenario description and its TOML file form.
//!
//! ```toml
//! epoch_len = 1.0
//! queue_capacity = 20
//! beta_max = 7
//! drop_penalty = 10.0
//!
//! [tasks]
//! phi = 4.0e7
//! gamma = 25.0
//!
//! [compute]
//! f_uav = 1.0e9
//! f_sat = 5.0e9
//! f_bs = [1.0e10, 1.0e10]
//!
//! [radio]
//! p_bs = 1.6
//!
//! [energy]
//! budget = 1.0
//!
//! [arrivals]
//! rate = 2.0
//! truncation = 20
//!
//! [[trajectory.waypoints]]
//! available_bs = [1]
//! bs_geometry = [[120.0, 6.0]]
//! coverage_remaining = [1]
//!
//! [[trajectory.waypoints]]
//! ```
//!
//! Every key is optional; missing keys take the reference defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arrivals::ArrivalProcess;
use super::params::{ComputeParams, EnergyParams, RadioParams, TaskClass};
use super::trajectory::{CoverageRun, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Epoch length tau, seconds.
    pub epoch_len: f64,
    /// Computing queue size rho.
    pub queue_capacity: u32,
    /// Most tasks offloaded in one epoch.
    pub beta_max: u32,
    /// Cost charged per dropped task, seconds.
    pub drop_penalty: f64,
    pub tasks: TaskClass,
    pub compute: ComputeParams,
    pub radio: RadioParams,
    pub energy: EnergyParams,
    pub arrivals: ArrivalProcess,
    pub trajectory: Trajectory,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            epoch_len: 1.0,
            queue_capacity: 20,
            beta_max: 7,
            drop_penalty: 10.0,
            tasks: TaskClass::default(),
            compute: ComputeParams::default(),
            radio: RadioParams::default(),
            energy: EnergyParams::default(),
            arrivals: ArrivalProcess::default(),
            trajectory: Trajectory::default_loop(),
        }
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::default_loop()
    }
}

impl Scenario {
    pub fn num_bs(&self) -> usize {
        self.compute.num_bs()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epoch_len > 0.0 && self.epoch_len.is_finite()) {
            return Err(Error::Config("epoch_len must be > 0".into()));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be >= 1".into()));
        }
        if self.beta_max == 0 {
            return Err(Error::Config("beta_max must be >= 1".into()));
        }
        if !(self.drop_penalty >= 0.0 && self.drop_penalty.is_finite()) {
            return Err(Error::Config("drop_penalty must be finite and >= 0".into()));
        }
        self.tasks.validate()?;
        self.compute.validate()?;
        self.radio.validate()?;
        self.energy.validate()?;
        self.arrivals.validate()?;
        self.trajectory.validate(self.num_bs())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.energy.budget = budget;
        self
    }

    /// Six-waypoint, two-BS loop sized for training on a desktop: base
    /// stations are fast and cheap to reach, the satellite is slow and
    /// energy hungry.
    pub fn desk() -> Self {
        let trajectory = Trajectory::from_runs(
            6,
            &[
                CoverageRun { bs: 1, start: 0, geometry: vec![(150.0, 6.0), (100.0, 9.0), (160.0, 5.0)] },
                CoverageRun { bs: 2, start: 3, geometry: vec![(140.0, 6.0), (110.0, 8.0)] },
            ],
        )
        .expect("desk trajectory");
        let mut radio = RadioParams::default();
        radio.sat_channel_gain = radio.gain_for_sat_snr_db(5.0);
        Self {
            epoch_len: 1.0,
            queue_capacity: 10,
            beta_max: 3,
            drop_penalty: 10.0,
            tasks: TaskClass::default(),
            compute: ComputeParams {
                f_uav: 1.0e9,
                f_sat: 5.0e9,
                f_bs: vec![10.0e9, 10.0e9],
            },
            radio,
            energy: EnergyParams {
                kappa: 1e-28,
                budget: 0.3,
            },
            arrivals: ArrivalProcess {
                rate: 0.6,
                truncation: 10,
            },
            trajectory,
        }
    }

    /// Three-waypoint, one-BS instance small enough for exact solution:
    /// queue of 3, single-task offloads, at most one arrival per epoch.
    /// The UAV finishes half a task per epoch, so work only leaves the
    /// queue by offloading. The base station is far away at the first
    /// waypoint and close at the second, and a loud radio makes the
    /// difference matter against the budget.
    pub fn tiny() -> Self {
        let trajectory = Trajectory::from_runs(
            3,
            &[CoverageRun { bs: 1, start: 0, geometry: vec![(4000.0, 3.0), (90.0, 8.0)] }],
        )
        .expect("tiny trajectory");
        Self {
            epoch_len: 1.0,
            queue_capacity: 3,
            beta_max: 1,
            drop_penalty: 10.0,
            tasks: TaskClass::default(),
            compute: ComputeParams {
                f_uav: 0.5e9,
                f_sat: 5.0e9,
                f_bs: vec![10.0e9],
            },
            radio: RadioParams {
                p_bs: 10.0,
                ..RadioParams::default()
            },
            energy: EnergyParams {
                kappa: 1e-28,
                budget: 1.3,
            },
            arrivals: ArrivalProcess {
                rate: 0.3,
                truncation: 1,
            },
            trajectory,
        }
    }
}
