//! Experiment presets and command-line plumbing for `echodex`.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

pub use config::Preset;
pub use output::{Check, OutputDir};
