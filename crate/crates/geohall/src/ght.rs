//! `.ght` tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GHT1" | u32 dtype (0 = f32, 1 = f16) | u32 ndim | ndim x u64 dims | payload
//! ```
//!
//! The payload is the row-major IEEE-754 little-endian element data.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"GHT1";
const FIXED_HEADER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F16,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F16 => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F16),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F16 => "f16",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f16" => Ok(Dtype::F16),
            other => Err(Error::Usage(format!("unknown dtype {other:?}, expected f32 or f16"))),
        }
    }
}

/// A decoded tensor widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dtype: Dtype,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

fn element_count(dims: &[u64]) -> Option<usize> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| usize::try_from(n).ok())
}

/// Serializes a tensor. `path` only labels errors.
pub fn encode(path: &Path, dtype: Dtype, dims: &[u64], data: &[f64]) -> Result<Vec<u8>> {
    let overflow = || Error::DimsOverflow {
        path: path.to_path_buf(),
        dims: dims.to_vec(),
    };
    let unrepresentable = |value: f64| Error::Unrepresentable {
        path: path.to_path_buf(),
        value,
        dtype,
    };
    let n = element_count(dims).ok_or_else(overflow)?;
    if n != data.len() {
        return Err(Error::DimMismatch {
            path: path.to_path_buf(),
            expected: dims.to_vec(),
            found: vec![data.len() as u64],
        });
    }
    let ndim = u32::try_from(dims.len()).map_err(|_| overflow())?;
    let payload = n.checked_mul(dtype.size()).ok_or_else(overflow)?;
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * dims.len() + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&ndim.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for (index, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinitePayload {
                path: path.to_path_buf(),
                index,
            });
        }
        match dtype {
            Dtype::F32 => {
                let x = v as f32;
                if !x.is_finite() {
                    return Err(unrepresentable(v));
                }
                out.extend_from_slice(&x.to_le_bytes());
            }
            Dtype::F16 => {
                let h = f16::from_f64(v);
                if !h.is_finite() {
                    return Err(unrepresentable(v));
                }
                out.extend_from_slice(&h.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parses a tensor, checking dims against `expected` when given.
pub fn decode(path: &Path, bytes: &[u8], expected: Option<&[u64]>) -> Result<Tensor> {
    let truncated = |need: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected: need as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated(FIXED_HEADER));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: bytes[..4].try_into().unwrap(),
        });
    }
    if bytes.len() < FIXED_HEADER {
        return Err(truncated(FIXED_HEADER));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let code = u32_at(4);
    let dtype = Dtype::from_code(code).ok_or_else(|| Error::UnknownDtype {
        path: path.to_path_buf(),
        code,
    })?;
    let ndim = u32_at(8) as usize;
    let header = ndim
        .checked_mul(8)
        .and_then(|b| b.checked_add(FIXED_HEADER))
        .ok_or_else(|| truncated(usize::MAX))?;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<u64> = (0..ndim)
        .map(|i| {
            let at = FIXED_HEADER + 8 * i;
            u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        })
        .collect();
    if let Some(exp) = expected {
        if exp != dims.as_slice() {
            return Err(Error::DimMismatch {
                path: path.to_path_buf(),
                expected: exp.to_vec(),
                found: dims,
            });
        }
    }
    let overflow = || Error::DimsOverflow {
        path: path.to_path_buf(),
        dims: dims.clone(),
    };
    let n = element_count(&dims).ok_or_else(overflow)?;
    let total = n
        .checked_mul(dtype.size())
        .and_then(|p| p.checked_add(header))
        .ok_or_else(overflow)?;
    if bytes.len() < total {
        return Err(truncated(total));
    }
    if bytes.len() > total {
        return Err(Error::TrailingBytes {
            path: path.to_path_buf(),
            trailing: (bytes.len() - total) as u64,
        });
    }
    let payload = &bytes[header..];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        Dtype::F16 => payload
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f64())
            .collect(),
    };
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinitePayload {
            path: path.to_path_buf(),
            index,
        });
    }
    Ok(Tensor { dtype, dims, data })
}

pub fn write_tensor(path: &Path, dtype: Dtype, dims: &[u64], data: &[f64]) -> Result<()> {
    let bytes = encode(path, dtype, dims, data)?;
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_tensor(path: &Path, expected: Option<&[u64]>) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(path, &bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.ght")
    }

    #[test]
    fn single_value_sizes() {
        let b = encode(p(), Dtype::F32, &[1], &[2.0]).unwrap();
        assert_eq!(b.len(), 24);
        assert_eq!(&b[..4], b"GHT1");
        assert_eq!(&b[20..], &2.0f32.to_le_bytes());
        // a 1x1 matrix carries one more u64 dim
        let b = encode(p(), Dtype::F32, &[1, 1], &[2.0]).unwrap();
        assert_eq!(b.len(), 32);
        assert_eq!(&b[28..], &2.0f32.to_le_bytes());
    }

    #[test]
    fn f16_one_is_exact() {
        let b = encode(p(), Dtype::F16, &[1], &[1.0]).unwrap();
        assert_eq!(decode(p(), &b, None).unwrap().data, [1.0]);
    }

    #[test]
    fn f16_overflow_rejected() {
        assert!(matches!(encode(p(), Dtype::F16, &[1], &[1e6]), Err(Error::Unrepresentable { .. })));
    }

    #[test]
    fn distinct_errors() {
        let good = encode(p(), Dtype::F32, &[2, 3], &[0.0; 6]).unwrap();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(p(), &bad, None), Err(Error::BadMagic { .. })));
        assert!(matches!(decode(p(), &good, Some(&[2, 2])), Err(Error::DimMismatch { .. })));
        assert!(matches!(decode(p(), &good[..good.len() - 1], None), Err(Error::Truncated { .. })));
        let mut nan = good.clone();
        let end = nan.len();
        nan[end - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode(p(), &nan, None), Err(Error::NonFinitePayload { index: 5, .. })));
        let mut dt = good;
        dt[4] = 7;
        assert!(matches!(decode(p(), &dt, None), Err(Error::UnknownDtype { code: 7, .. })));
    }

    #[test]
    fn overflowing_dims() {
        assert!(matches!(
            encode(p(), Dtype::F32, &[u64::MAX, 2], &[]),
            Err(Error::DimsOverflow { .. })
        ));
    }
}
