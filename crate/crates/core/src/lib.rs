//! Streaming learners with Gaussian weight distributions, expert ensembles,
//! warm-up tuning and drift monitoring.

pub mod data;
pub mod error;
pub mod experiments;
pub mod experts;
pub mod features;
pub mod gaussian;
pub mod geometry;
pub mod logistic;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod warmup;

pub use error::{Error, Result};
