//! File formats, pipeline stages and the `geohall` command line on top of
//! `geohall-core`.

pub mod cli;
pub mod config;
mod error;
pub mod ght;
pub mod pipeline;
pub mod statsfile;
pub mod store;

pub use error::{Error, Result};
