//! Library half of the `sonmf-kit` binary: argument parsing, the
//! `factorize`, `simulate` and `textpipe` commands, and run manifests.

pub mod args;
pub mod commands;
mod error;
pub mod manifest;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;
