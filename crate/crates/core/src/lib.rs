//! Delay-oriented task scheduling for a UAV that offloads IoT work to base
//! stations or a LEO satellite under an energy budget.
//!
//! * [`env`]: epoch simulator (queues, links, delay, energy).
//! * [`mdp`]: action list, masks, cost and risk signals, state encoding.
//! * [`neural`]: dense Q-networks with backprop and Adam.
//! * [`agent`]: the risk-sensitive dual-Q learner and its constraint-weight loop.
//! * [`baselines`]: random and sampling-calibrated probabilistic policies.
//! * [`oracle`]: exact tabular solutions for small scenarios.
//! * [`harness`]: experiment orchestration and metrics output.

pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod neural;
pub mod oracle;
pub mod policy;
pub mod agent;
pub mod baselines;

pub use error::{Error, Result};
