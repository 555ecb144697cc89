//! Desk-scale multi-task pipeline for false-news classification and
//! check-worthy claim detection: corpus preparation, classical baselines, a
//! trainable transformer encoder with task heads, split protocols, and
//! statistical reporting.

pub mod baselines;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod multitask;
pub mod parallel;
pub mod evaluation;
pub mod splits;
pub mod synthetic;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
