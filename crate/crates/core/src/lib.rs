//! Adaptive fraud-alert threshold selection.
//!
//! * [`synth`]: seeded synthetic transaction streams with label-conditional
//!   fraud scores.
//! * [`env`]: the capacity-limited hourly alert environment.
//! * [`neuro`]: a small MLP with hand-written backpropagation and Adam.
//! * [`dqn`]: deep Q-learning with experience replay.
//! * [`metrics`]: static baselines, net fraud savings and alert counts.
//! * [`harness`]: end-to-end experiments and their file artifacts.

pub mod dqn;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod money;
pub mod neuro;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use money::Money;
