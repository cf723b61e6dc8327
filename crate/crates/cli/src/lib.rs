//! Run persistence, calibration from a run directory, and the HTTP service
//! behind the `helioview` binary.

pub mod error;
pub mod runs;
pub mod service;

pub use error::CliError;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/interface.md")]
mod book {}
