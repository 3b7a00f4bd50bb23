//! Storage format and benchmark protocol for urban spatial-temporal data.
//!
//! Datasets are stored as "atomic files": comma-separated tables for
//! geographical units (`.geo`), relations between them (`.rel`), dynamics
//! over graph nodes, grid cells or origin-destination pairs (`.dyna`,
//! `.grid`, `.od`, `.gridod`) and external context (`.ext`). The crate
//! parses and validates them, assembles dense tensors, windows them into
//! forecasting samples, scores baseline predictors with masked metrics and
//! aggregates the results into leaderboards and temporal error profiles.

pub mod analytics;
pub mod assemble;
pub mod atomio;
pub mod baselines;
pub mod convert;
pub mod error;
pub mod export;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod time;
pub mod validate;

pub use error::{Error, Result};
pub use model::*;
pub use time::Timestamp;
