//! Experiment harness, file formats and command-line front end for the
//! `udfilt-core` universal filters.

pub mod harness;
pub mod io;
pub mod presets;
pub mod scenario;

pub use udfilt_core as core;
