//! Experiment runner, verification suites, constructions and rate tables for
//! implicit generative densities.

// `!(x > 0.0)` guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod construct;
pub mod error;
pub mod experiment;
pub mod rates;
pub mod spec;
pub mod verify;

pub use error::{CliError, Result};
