//! Command-line front end for DAGMM-HO: WAV and manifest IO, the binary
//! feature-cache and model formats, configuration, and the pipeline behind
//! the `synth`, `tune`, `train`, `score` and `eval` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod persist;
pub mod pipeline;
pub mod report;
pub mod wav;

pub use dagmm_ho_core as core;
pub use error::{CliError, Result};
