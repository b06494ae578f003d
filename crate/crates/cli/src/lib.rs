//! Batch front end: parameter/scenario loading, the four subcommands and
//! their file outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod scenario;

pub use error::CliError;
