//! Configuration, CSV export and experiment drivers behind the `mbcl`
//! binary.

pub mod config;
pub mod error;
pub mod export;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use run::run_experiment;
