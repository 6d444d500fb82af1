//! Command-line drivers for `kropina-core`: TOML configs in, JSON documents and
//! CSV path tables out.
//!
//! Every command is a function of the config, the seed and the flag overrides,
//! so two runs with the same inputs write byte-identical files.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{Command, Context, Overrides};
pub use config::RunConfig;
pub use error::CliError;
