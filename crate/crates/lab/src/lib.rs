//! Experiment harness for `isq-core`: configuration, subcommands, report
//! files and the acceptance suite.

// NaN-rejecting checks are written as `!(x >= a)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{ExperimentConfig, Overrides};
pub use error::{LabError, Result};
