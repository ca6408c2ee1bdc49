//! Command-line front end for the detection simulator.

pub mod commands;
pub mod config;

pub use config::{parse_config, ConfigError, Scenario, SweepSpec};
