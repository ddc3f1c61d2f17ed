//! File formats, configuration documents and subcommands of the `roadsense` tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use error::{CliError, Result};
