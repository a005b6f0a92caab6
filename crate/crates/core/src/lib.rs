//! Ordinal regression with cumulative-sum rank perceptrons.
//!
//! The crate is organised around a generic online structured perceptron
//! ([`engine`]) and its ordinal instantiations: the cumulative-sum ranker
//! ([`cusum`]), PRank ([`prank`]), an independent-perceptron counting
//! baseline ([`ensemble`]) and a kernelized dual form ([`kernel`]).
//! [`synthlab`] builds separable problems with a planted margin and checks
//! the mistake bounds; [`data`] and [`features`] prepare benchmark data.

pub mod cusum;
pub mod data;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod kernel;
pub mod loss;
pub mod prank;
pub mod synthlab;
pub mod types;
pub mod vector;

/// Absolute slack allowed when comparing margins and bounds.
pub const TOLERANCE: f64 = 1e-9;

pub use error::{Error, Result};
pub use loss::{absolute_loss, mean_absolute_error, LossFn};
pub use types::{Rank, RankedDataset, RankedExample, WeightStack, BIAS};
