//! Command-line front end for the ring-chain spectral engine.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod length;
pub mod output;
pub mod run;

pub use output::Document;
pub use run::{exit_code, run, Cli, ConfigError};
