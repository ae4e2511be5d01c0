//! Command-line orchestration of the mammogram pipeline.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use config::PipelineConfig;
