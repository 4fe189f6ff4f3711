//! Runner, configuration files, result output and the `mmimo` command line
//! on top of [`mmimo_core`].

pub mod cli;
pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, ConfigError, Overrides, RunConfig};
pub use runner::run_parallel;
