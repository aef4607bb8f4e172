//! Library behind the `semloop` binary: config handling and subcommand
//! implementations, exposed so tests can drive commands directly.

pub mod commands;
pub mod config;
