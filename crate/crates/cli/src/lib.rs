//! Batch front end: strict JSON configs in, CSV/JSON artifacts and exit codes out.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, ConfigError, RunConfig};
pub use run::{execute, Command, Failure, Outcome};
