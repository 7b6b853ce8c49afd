//! Factorized implicit neural representations for spatiotemporal fields.

pub mod baselines;
pub mod data;
pub mod error;
pub mod features;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
