//! Configuration parsing and run orchestration behind the `rodlimit` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{execute, Command, RunOptions};
