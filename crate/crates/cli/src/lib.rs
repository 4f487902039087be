//! Experiment runner: JSON run configs, seeded trials, CSV and checkpoint output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod verify;

pub use config::{Experiment, Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use experiments::{checkpoint_roundtrip, run};
