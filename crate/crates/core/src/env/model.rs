//! Closed-form delay, rate and energy expressions. Everything here is a
//! pure function of its arguments; [`super::Environment`] binds them to a
//! scenario.

use super::params::{PathlossCoeffs, RadioParams, TaskClass};
use crate::error::{Error, Result};

/// UAV-BS pathloss in dB at distance `x` (m) and elevation `theta` (deg).
pub fn bs_pathloss(c: &PathlossCoeffs, x: f64, theta: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("pathloss distance must be > 0, got {x}")));
    }
    Ok(10.0 * c.a0 * x.log10()
        + c.b0 * (theta - c.theta0) * ((c.theta0 - theta) / c.c0).exp()
        + c.eta0)
}

/// Shannon rate in bits/s.
pub fn shannon_rate(bandwidth: f64, snr: f64) -> f64 {
    bandwidth * (1.0 + snr).log2()
}

/// UAV-BS rate for a pathloss in dB, applied as attenuation.
pub fn bs_rate_for_pathloss(radio: &RadioParams, pathloss_db: f64) -> f64 {
    let snr = radio.p_bs * 10f64.powf(-pathloss_db / 10.0) / radio.noise_bs();
    shannon_rate(radio.w_bs, snr)
}

/// UAV-satellite rate; location independent.
pub fn sat_rate(radio: &RadioParams) -> f64 {
    shannon_rate(radio.w_sat, radio.sat_snr())
}

/// Tasks the UAV finishes in one epoch, `floor(f_U * tau / (phi * gamma))`.
pub fn local_capacity(task: &TaskClass, f_uav: f64, tau: f64) -> u32 {
    (f_uav * tau / task.cycles()).floor() as u32
}

/// Compute delay of `beta` tasks at a destination of capability `f_dest`.
pub fn offload_compute_delay(task: &TaskClass, f_dest: f64, beta: u32) -> f64 {
    beta as f64 * task.cycles() / f_dest
}

/// Result of one computing-queue update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueUpdate {
    /// Tasks left waiting in the queue this epoch.
    pub queued: u32,
    pub next_backlog: u32,
    pub dropped: u32,
    /// Tasks executed on the UAV this epoch.
    pub processed: u32,
}

/// Advances the computing queue. `beta` tasks leave for offloading,
/// `capacity` are processed locally, `arrivals` join, overflow past
/// `rho` is dropped.
pub fn queue_update(backlog: u32, beta: u32, arrivals: u32, capacity: u32, rho: u32) -> Result<QueueUpdate> {
    if beta > backlog {
        return Err(Error::InvalidAction(format!(
            "cannot offload {beta} tasks from a backlog of {backlog}"
        )));
    }
    if backlog > rho {
        return Err(Error::Domain(format!("backlog {backlog} exceeds queue size {rho}")));
    }
    let queued = backlog.saturating_sub(capacity).saturating_sub(beta);
    let processed = backlog - beta - queued;
    let total = queued + arrivals;
    Ok(QueueUpdate {
        queued,
        next_backlog: total.min(rho),
        dropped: total.saturating_sub(rho),
        processed,
    })
}

/// Local compute time plus queueing time for this epoch.
pub fn local_delay(task: &TaskClass, f_uav: f64, tau: f64, capacity: u32, backlog: u32, queued: u32) -> f64 {
    capacity.min(backlog) as f64 * task.cycles() / f_uav + queued as f64 * tau
}

/// Transmission delay of `beta` tasks at `rate`, plus `prop_delay` once
/// (pass 0 for base stations).
pub fn tx_delay(task: &TaskClass, beta: u32, rate: f64, prop_delay: f64) -> f64 {
    if beta == 0 {
        return 0.0;
    }
    beta as f64 * task.phi / rate + prop_delay
}

/// Time the radio is busy sending `beta` tasks.
pub fn transmit_time(task: &TaskClass, beta: u32, rate: f64) -> f64 {
    if beta == 0 {
        return 0.0;
    }
    beta as f64 * task.phi / rate
}

/// Largest BS offload count that fits in `coverage` epochs at a constant
/// `rate`.
pub fn feasible_beta_max_const(task: &TaskClass, rate: f64, coverage: u32, tau: f64, beta_max: u32) -> u32 {
    let fit = (coverage as f64 * rate * tau / task.phi).floor();
    if fit >= beta_max as f64 {
        beta_max
    } else {
        fit.max(0.0) as u32
    }
}

/// Epochs needed to push `bits` through a link whose per-epoch rates are
/// `rates` (the first entry is the current epoch). `None` if the rates run
/// out first.
pub fn epochs_to_send(bits: f64, rates: &[f64], tau: f64) -> Option<usize> {
    if bits <= 0.0 {
        return Some(0);
    }
    let mut sent = 0.0;
    for (k, r) in rates.iter().enumerate() {
        sent += r * tau;
        if sent >= bits {
            return Some(k + 1);
        }
    }
    None
}

/// Transmit energy: `power` times the time spent sending.
pub fn comm_energy(task: &TaskClass, power: f64, beta: u32, rate: f64) -> f64 {
    power * transmit_time(task, beta, rate)
}

/// Energy of local computation given the backlog at the start of the epoch.
pub fn comp_energy(task: &TaskClass, f_uav: f64, tau: f64, kappa: f64, backlog: u32) -> f64 {
    (backlog as f64 * task.cycles()).min(f_uav * tau) * kappa * f_uav * f_uav
}
