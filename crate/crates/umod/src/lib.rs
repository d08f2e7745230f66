//! File formats, run configuration and subcommands around [`umod_core`].
//!
//! Series and embedding dumps share one binary container
//! ([`container`]); trained models are stored as checkpoints
//! ([`checkpoint`]). Runs are driven by a TOML [`RunConfig`].

mod binio;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
mod error;
pub mod trips;

pub use config::RunConfig;
pub use error::{Result, UmodError};
pub use umod_core;
