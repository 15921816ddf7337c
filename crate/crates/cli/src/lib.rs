//! Command-line front end for `okalab-core`.

pub mod acceptance;
mod commands;
pub mod config;

pub use commands::{run, SCHEMA_VERSION};
