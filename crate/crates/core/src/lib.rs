//! Demographic inference from call and SMS detail records.
//!
//! The crate covers the whole chain: parsing records into a communication
//! graph, per-user behavioral features, preprocessing, exploratory
//! statistics, node-attribute classifiers, reaction-diffusion label
//! propagation over the graph, quota-constrained collapse of probability
//! vectors, a synthetic data generator with planted homophily, and the
//! evaluation pipeline that ties them together.

pub mod cdr;
pub mod classify;
pub mod demographics;
pub mod error;
pub mod features;
pub mod preprocess;
pub mod pipeline;
pub mod pps;
pub mod propagation;
pub mod split;
pub mod synth;
pub mod stats;

pub use error::{Error, Result};
