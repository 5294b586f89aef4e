use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Broad category of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("history table: {0}")]
    HistoryTable(String),

    #[error("cannot generate record for {qa}: {reason}")]
    Generation { qa: String, reason: String },

    #[error("cannot perturb {0}: answer span is empty")]
    EmptyAnswerSpan(String),

    #[error("invalid trace {record}: {reason}")]
    InvalidTrace { record: String, reason: String },

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("spectrum is identically zero")]
    ZeroSpectrum,

    #[error("attention diagonal entry {0} is outside [0, 1]")]
    AttentionOutOfRange(f64),

    #[error("token span [{start}, {end}) is outside a sequence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("layer {layer}: {source}")]
    Layer { layer: usize, source: Box<Error> },

    #[error("degenerate sibling variance for {record} at layer {layer}")]
    DegenerateVariance { record: String, layer: usize },

    #[error("degenerate sibling variance (base deviates by {deviation:e})")]
    DegenerateSiblings { deviation: f64 },

    #[error("perturbation group for {0} is malformed: {1}")]
    InvalidGroup(String, String),

    #[error("empty score set: {0}")]
    EmptyScores(&'static str),

    #[error("no records for condition {0}")]
    EmptyCondition(String),

    #[error("invalid mock config: {0}")]
    InvalidMockConfig(String),

    #[error("record {0} has an empty response")]
    EmptyResponse(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidSpec(_) | Error::InvalidMockConfig(_) | Error::EmptyScores(_) => {
                ErrorKind::Usage
            }
            Error::NonFinite
            | Error::ZeroSpectrum
            | Error::DegenerateVariance { .. }
            | Error::DegenerateSiblings { .. } => ErrorKind::Numerical,
            Error::Layer { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn at_layer(self, layer: usize) -> Error {
        Error::Layer {
            layer,
            source: Box::new(self),
        }
    }
}
