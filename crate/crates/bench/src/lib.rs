//! Experiment driver for noisy-coreset: data loading, the seeded benchmark
//! grid, the beta sweep and table output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod emit;
pub mod error;
pub mod experiment;

pub use error::{BenchError, Result};
