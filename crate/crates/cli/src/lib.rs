//! Configuration, file formats and command implementations behind the `nlch`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod snapshot;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{CliError, Result};
