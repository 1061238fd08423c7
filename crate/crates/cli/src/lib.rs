//! Batch driver for the `gflow` simulator: configuration, on-disk formats,
//! run orchestration, neck detection on snapshots, parameter sweeps and
//! the validation suite.

pub mod commands;
pub mod config;
pub mod output;
pub mod run;
pub mod validate;
