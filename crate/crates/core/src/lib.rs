//! Parallel entity matching: partitioning of match problems into independent
//! tasks, a similarity and strategy library to evaluate them, and a
//! coordinator/worker runtime that schedules tasks with partition caching.

pub mod data_service;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod partitioning;
pub mod similarity;
pub mod strategy;

pub use error::{Error, Result};
