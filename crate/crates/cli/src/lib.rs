//! Library side of the `torrey` command-line tool.

pub mod commands;
pub mod config;

pub use commands::{critical_gradient, PhysicalParams};
pub use config::RunConfig;
