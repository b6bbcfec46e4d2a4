//! Deterministic, single-process simulator of a federated graph recommender.
//!
//! The pipeline: ingest interaction logs ([`dataset`]), derive time-sliced
//! and implicit relation graphs ([`graphs`]), train a spatio-temporal
//! attention model with exact reverse-mode gradients ([`model`]) under a
//! simulated federation loop with optional additive-mask secure aggregation
//! ([`federation`]), and score the result with ranking and rating metrics
//! ([`evaluation`]).
//!
//! Everything is driven by one master seed; see [`seed`] for how it fans out.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod federation;
pub mod graphs;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod seed;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use parallel::Parallelism;
