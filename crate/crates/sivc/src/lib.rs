//! File formats, experiment orchestration and the `sivc` command line on top
//! of [`sivc_core`].

pub mod binary;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod report;
pub mod table;

pub use commands::{cmd_cluster, cmd_experiment, cmd_fit, cmd_report, cmd_simulate, Outcome};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentOutput};
