//! Configuration, pipeline and subcommands of the `priorgan` binary.

pub mod commands;
pub mod config;
pub mod pgm;
pub mod pipeline;

pub use config::RunConfig;
