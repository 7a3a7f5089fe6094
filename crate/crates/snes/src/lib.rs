//! File formats, configuration and the benchmark runner around `snes-core`.
//!
//! The `snes` binary wraps these modules; everything it does is also
//! reachable from here.

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod model_io;

pub use config::RunConfig;
pub use error::{Error, Result};
