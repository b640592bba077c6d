//! File formats, experiment runner and reporting on top of `inas-core`.

pub mod checkpoint;
pub mod config;
mod error;
pub mod loaders;
pub mod report;
pub mod runner;
pub mod space;
pub mod svg;

pub use error::{AppError, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "INAS_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub fn output_root() -> std::path::PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| DEFAULT_OUTPUT_ROOT.into(), Into::into)
}
