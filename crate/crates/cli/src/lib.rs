//! Configuration handling and experiment drivers behind the `g2flow` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;

pub use config::{validate_config, validate_config_str, ConfigError, ExperimentConfig};
pub use experiments::{RunError, RunReport, Runner};

use std::path::PathBuf;

use g2flow::fixtures::FixtureSet;

/// Environment variable naming a fixture directory that replaces the
/// embedded fixtures.
pub const FIXTURES_ENV: &str = "G2FLOW_FIXTURES";

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const HALT: i32 = 3;
}

pub fn fixtures_from_env() -> FixtureSet {
    match std::env::var_os(FIXTURES_ENV) {
        Some(dir) if !dir.is_empty() => FixtureSet::from_dir(PathBuf::from(dir)),
        _ => FixtureSet::builtin(),
    }
}
