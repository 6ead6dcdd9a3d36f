//! Curvature-aided incremental aggregated gradient methods and their baselines.

pub mod dataio;
pub mod error;
pub mod optim;
pub mod oracle;
pub mod sparse;
pub mod theory;
pub mod tracker;

pub use error::{Error, Result};
