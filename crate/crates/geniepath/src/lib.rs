//! File formats, checkpoints, DOT export and the command-line driver for
//! [`geniepath_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dot;
mod error;
pub mod io;

pub use error::{Error, ParseError, Result};
