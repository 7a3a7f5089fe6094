//! Approximate policy iteration for the single-node energy storage problem.
//!
//! One producer/consumer node owns a battery and trades against a grid that
//! buys at `P_t` and sells at `C_t >= P_t`. This crate holds the pure
//! algorithmic pieces:
//!
//! - [`stochastic`]: seeded exogenous processes (demand, renewable output, prices).
//! - [`model`]: the aggregate one-dimensional decision model and the naive policy.
//! - [`oracle`]: exact hindsight and small stochastic optima.
//! - [`regress`]: OLS, linear SVR and a small feed-forward network.
//! - [`apinn`]: the evaluate / fit / improve loop.
//! - [`bench`]: benchmark classes and the percent-of-optimal metric.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `snes` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod apinn;
pub mod bench;
pub mod model;
pub mod oracle;
pub mod regress;
pub mod rng;
pub mod stochastic;

pub use apinn::{ApinnConfig, PolicyMode, PolicyTable};
pub use model::{BatteryParams, Decision, Scenario, StageState};
pub use regress::{Architecture, ValueModel};
pub use rng::StreamSeed;
pub use stochastic::{ExogenousState, ProcessConfig};
