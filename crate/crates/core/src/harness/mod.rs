//! Configuration, experiment drivers, verification suite and artifacts.

pub mod config;
pub mod experiments;
pub mod initial;
pub mod report;
pub mod verify;

pub use config::{LoadedConfig, RunConfig};
pub use report::{ExperimentReport, Verdict};
