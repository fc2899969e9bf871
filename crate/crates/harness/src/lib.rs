//! Experiment harness: configs in, CSV artifacts out.

pub mod config;
mod error;
pub mod exp2d;
pub mod imaging;
pub mod oracle;
pub mod output;
pub mod props;
pub mod schedule;

pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
