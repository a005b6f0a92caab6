//! Configuration, model artifacts and the benchmark pipeline behind the
//! `cusumrank` command line tool.

pub mod artifact;
pub mod config;
pub mod datasets;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod verify;

pub use error::{BenchError, Result};
