//! Hourly air-quality estimation on a regular grid from sparse monitoring
//! stations: feature assembly from seven dataset families, a histogram
//! gradient-boosted tree learner, experiment protocols, and grid-wide
//! prediction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod gbdt;
pub mod grid;
pub mod ingest;
pub mod microsim;
pub mod predict;
pub mod train;
pub mod world;

pub use error::{Error, Result};
