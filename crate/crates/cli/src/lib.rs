//! Configuration, serialization and command implementations behind the
//! `urnsa` binary.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{ExitStatus, Outcome};
