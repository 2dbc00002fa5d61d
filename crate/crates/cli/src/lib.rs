//! Experiment driver: configuration, CSV output, statistics and the
//! experiment runners.

pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;
