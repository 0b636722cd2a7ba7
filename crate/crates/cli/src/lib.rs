//! Command-line harness: configuration, run manifests and the pipeline commands.

pub mod commands;
pub mod config;
pub mod errors;
pub mod manifest;

pub use config::{AttributionConfig, RunConfig};
pub use errors::{code_of, render, Code};
pub use manifest::{RunManifest, VerifiedRun};
