//! Command-line front end for `phtrack`: configuration files, single runs,
//! gain sweeps and the verification suite.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] phtrack::Error),
    #[error("i/o error: {0}")]
    Io(String),
}
