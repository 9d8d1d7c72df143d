//! Physical constants of the scenario. Defaults reproduce the reference
//! simulation table (five base stations, 5 MB tasks at 25 cycles/bit, ...).
//!
//! Units: bits, seconds, Hz, W, J. 1 MB is taken as 10^6 bytes, so a
//! default task carries 4e7 bits and 1e9 CPU cycles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits in one (decimal) megabyte.
pub const BITS_PER_MB: f64 = 8.0e6;

/// A computing task: input size and per-bit workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskClass {
    /// Input size in bits.
    pub phi: f64,
    /// Workload in CPU cycles per bit.
    pub gamma: f64,
}

impl Default for TaskClass {
    fn default() -> Self {
        Self {
            phi: 5.0 * BITS_PER_MB,
            gamma: 25.0,
        }
    }
}

impl TaskClass {
    /// CPU cycles needed by one task.
    pub fn cycles(&self) -> f64 {
        self.phi * self.gamma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.gamma > 0.0) {
            return Err(Error::Config("task phi and gamma must be > 0".into()));
        }
        let c = self.cycles();
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config("task cycles must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Computing capabilities in cycles/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeParams {
    pub f_uav: f64,
    pub f_sat: f64,
    /// One entry per base station; entry `n - 1` belongs to BS `n`.
    pub f_bs: Vec<f64>,
}

impl Default for ComputeParams {
    fn default() -> Self {
        Self {
            f_uav: 1.0e9,
            f_sat: 5.0e9,
            f_bs: vec![10.0e9; 5],
        }
    }
}

impl ComputeParams {
    pub fn num_bs(&self) -> usize {
        self.f_bs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.f_uav > 0.0 && self.f_sat > 0.0 && self.f_bs.iter().all(|&f| f > 0.0);
        if !ok {
            return Err(Error::Config("all compute capabilities must be > 0".into()));
        }
        Ok(())
    }
}

/// Coefficients of the elevation-dependent UAV-BS pathloss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathlossCoeffs {
    pub a0: f64,
    pub theta0: f64,
    pub b0: f64,
    pub c0: f64,
    pub eta0: f64,
}

impl Default for PathlossCoeffs {
    fn default() -> Self {
        Self {
            a0: 3.04,
            theta0: -3.61,
            b0: -23.29,
            c0: 4.14,
            eta0: 20.7,
        }
    }
}

/// Radio configuration of the two UAV interfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub w_sat: f64,
    pub w_bs: f64,
    pub p_sat: f64,
    pub p_bs: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd: f64,
    /// Effective |h|^2 of the satellite link (linear).
    pub sat_channel_gain: f64,
    /// One-way propagation delay to the satellite, seconds.
    pub sat_prop_delay: f64,
    pub pathloss: PathlossCoeffs,
}

/// Satellite SNR used when no channel gain is given.
pub const DEFAULT_SAT_SNR_DB: f64 = 15.0;

impl Default for RadioParams {
    fn default() -> Self {
        let mut radio = Self {
            w_sat: 2.0e6,
            w_bs: 3.0e6,
            p_sat: 5.0,
            p_bs: 1.6,
            noise_psd: -174.0,
            sat_channel_gain: 0.0,
            sat_prop_delay: 6.44e-3,
            pathloss: PathlossCoeffs::default(),
        };
        radio.sat_channel_gain = radio.gain_for_sat_snr_db(DEFAULT_SAT_SNR_DB);
        radio
    }
}

/// Noise power in W over `bandwidth` Hz for a PSD in dBm/Hz.
pub fn noise_power(noise_psd_dbm: f64, bandwidth: f64) -> f64 {
    10f64.powf((noise_psd_dbm + 10.0 * bandwidth.log10() - 30.0) / 10.0)
}

impl RadioParams {
    pub fn noise_sat(&self) -> f64 {
        noise_power(self.noise_psd, self.w_sat)
    }

    pub fn noise_bs(&self) -> f64 {
        noise_power(self.noise_psd, self.w_bs)
    }

    /// Channel gain that yields the given satellite SNR at `p_sat`.
    pub fn gain_for_sat_snr_db(&self, snr_db: f64) -> f64 {
        10f64.powf(snr_db / 10.0) * self.noise_sat() / self.p_sat
    }

    pub fn sat_snr(&self) -> f64 {
        self.p_sat * self.sat_channel_gain / self.noise_sat()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.w_sat > 0.0
            && self.w_bs > 0.0
            && self.p_sat > 0.0
            && self.p_bs > 0.0
            && self.sat_channel_gain >= 0.0
            && self.sat_prop_delay >= 0.0
            && self.noise_psd.is_finite()
            && self.pathloss.c0 != 0.0;
        if !ok {
            return Err(Error::Config(
                "radio bandwidths/powers must be > 0, gain and propagation delay >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Energy model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Effective switched capacitance of the UAV chip.
    pub kappa: f64,
    /// Time-averaged energy budget per epoch, J.
    pub budget: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            kappa: 1e-28,
            budget: 55.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.budget > 0.0) {
            return Err(Error::Config("kappa and energy budget must be > 0".into()));
        }
        Ok(())
    }
}
