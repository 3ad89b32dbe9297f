//! Monte-Carlo harness and command-line front end for bias-compensated
//! diffusion LMS.

pub mod cli;
pub mod error;
pub mod harness;
pub mod manifest;
pub mod output;

pub use error::{Result, SimError};
pub use harness::{run_experiment, ExperimentResult, RunOptions};
pub use manifest::{preset, ExperimentConfig};
