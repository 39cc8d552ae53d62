//! File formats, configuration and pipeline orchestration behind the `nlos`
//! command-line tool.

pub mod config;
pub mod error;
pub mod nlt;
pub mod pipeline;

pub use error::{CliError, ExitStatus};
