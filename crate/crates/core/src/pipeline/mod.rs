//! End-to-end driver: config parsing, CSV ingestion, plaintext pre-joins,
//! the secure join/purify/train pipeline, and report emission.

pub mod config;
pub mod ingest;
pub mod plan;
pub mod run;

pub use config::PipelineConfig;
pub use ingest::ingest;
pub use run::{run_pipeline, PipelineOutput};
