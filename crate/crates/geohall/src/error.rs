use std::io;
use std::path::{Path, PathBuf};

use geohall_core::ErrorKind;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] geohall_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: bad magic {found:?}, expected \"GHT1\"", path.display())]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{}: unknown dtype code {code}", path.display())]
    UnknownDtype { path: PathBuf, code: u32 },

    #[error("{}: dims {found:?} do not match expected {expected:?}", path.display())]
    DimMismatch {
        path: PathBuf,
        expected: Vec<u64>,
        found: Vec<u64>,
    },

    #[error("{}: dtype {found} does not match manifest dtype {expected}", path.display())]
    DtypeMismatch {
        path: PathBuf,
        expected: crate::ght::Dtype,
        found: crate::ght::Dtype,
    },

    #[error("{}: truncated, expected {expected} bytes, found {found}", path.display())]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("{}: {trailing} trailing bytes after payload", path.display())]
    TrailingBytes { path: PathBuf, trailing: u64 },

    #[error("{}: non-finite value at element {index}", path.display())]
    NonFinitePayload { path: PathBuf, index: usize },

    #[error("{}: dims {dims:?} overflow", path.display())]
    DimsOverflow { path: PathBuf, dims: Vec<u64> },

    #[error("{}: value {value} overflows {dtype}", path.display())]
    Unrepresentable {
        path: PathBuf,
        value: f64,
        dtype: crate::ght::Dtype,
    },

    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{record}: {source}")]
    Record {
        record: String,
        source: geohall_core::Error,
    },

    #[error("{0}")]
    Inconsistent(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Core(e) | Error::Record { source: e, .. } => e.kind(),
            Error::Usage(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }

    /// Process exit code: 1 usage, 2 data or format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}
