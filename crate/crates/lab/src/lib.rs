//! File formats, experiment orchestration and the command implementations
//! behind the `nuce-lab` binary.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod detections;
pub mod error;
pub mod experiment;
pub mod model_io;
pub mod svg;

pub use error::{LabError, Result};
