//! Experiment specs, presets and the CLI plumbing.

pub mod certify;
pub mod data;
pub mod presets;
pub mod runner;
pub mod spec;
