//! Geometric hallucination statistics over LLM activation traces.
//!
//! This crate holds the pure parts of the toolkit and builds without `std`:
//!
//! - [`corpus`]: the synthetic math/history/counting QA corpora and the
//!   prompt/response renderer for each hallucination type and severity.
//! - [`trace`]: the in-memory activation trace (per-layer hidden states or
//!   Gram matrices plus attention diagonals).
//! - [`geostats`]: Hidden Score, Matrix Entropy and Attention Score.
//! - [`pnorm`]: perturbation normalization against perturbed-answer siblings.
//! - [`eval`]: rank-statistic AUROC, layer sweeps, detection tables and
//!   distribution summaries.
//! - [`mocklm`]: a deterministic stand-in for a language model, used to drive
//!   the whole pipeline without model weights.
//!
//! File formats, directories and the command line live in the `geohall` crate.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod geostats;
mod hash;
mod linalg;
pub mod mocklm;
pub mod pnorm;
pub mod trace;

pub use error::{Error, ErrorKind, Result};
