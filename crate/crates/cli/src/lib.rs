//! Batch pipeline behind the `relana` binary: configuration, stage
//! orchestration with resumable manifests, and report emission.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use error::{CliError, EXIT_STAGE, EXIT_VALIDATION};
pub use manifest::RunManifest;
pub use pipeline::run_pipeline;
pub use report::{emit_report, ReportFormat};
