//! Experiment plumbing: datasets, configuration, cross-validation, metrics.

pub mod config;
pub mod cv;
pub mod dataset;
pub mod metrics;
