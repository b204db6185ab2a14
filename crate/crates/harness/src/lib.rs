//! Experiment harness: configuration, run orchestration, persistence,
//! statistics tables and plot data.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod plotdata;
pub mod run;
pub mod table;

pub use error::{HarnessError, Result};
