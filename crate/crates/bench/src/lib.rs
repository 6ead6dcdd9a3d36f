//! Experiment harness: data loading, reference solutions, solver sweeps and
//! CSV traces, plus the `ciag-bench` command line.
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod reference;
pub mod solver_spec;

pub use error::{BenchError, Result};
