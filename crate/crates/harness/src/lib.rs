//! Configuration, pipeline orchestration, sweeps and file formats.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod emit;
pub mod replay;
pub mod snapshot;
pub mod sweep;
