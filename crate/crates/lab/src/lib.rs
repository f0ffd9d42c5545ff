//! Command-line harness for `reachdim-core`: configuration, file formats,
//! parallel fan-out and the experiment recipes.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod parallel;
pub mod svg;
pub mod table;

pub use config::{Experiment, ExperimentConfig};
pub use error::{LabError, LabResult};
pub use experiments::{run, Report};
