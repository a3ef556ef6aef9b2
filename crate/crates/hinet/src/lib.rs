//! File formats, the training loop and command implementations for the
//! `hinet` binary.

pub mod bench;
pub mod checkpoint;
pub mod config;
mod error;
pub mod hvol;
pub mod report;
pub mod train;

pub use error::{HinetError, Result};
