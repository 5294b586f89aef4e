//! In-memory activation traces.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major matrix in working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::InvalidTrace {
                record: String::new(),
                reason: format!("{rows}x{cols} matrix given {} values", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidTrace {
                    record: String::new(),
                    reason: "ragged rows".into(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * selfᵀ`.
    pub fn gram(&self) -> Matrix {
        let m = self.rows;
        let mut g = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                g.data[i * m + j] = v;
                g.data[j * m + i] = v;
            }
        }
        g
    }

    /// Rows `range` (for hidden states).
    pub fn row_slice(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Principal submatrix on `[start, end)` (for Gram matrices).
    pub fn principal(&self, start: usize, end: usize) -> Matrix {
        let k = end - start;
        let mut out = Vec::with_capacity(k * k);
        for i in start..end {
            out.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix {
            rows: k,
            cols: k,
            data: out,
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Hidden,
    Gram,
}

impl PayloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Hidden => "hidden",
            PayloadKind::Gram => "gram",
        }
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PayloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden" => Ok(PayloadKind::Hidden),
            "gram" => Ok(PayloadKind::Gram),
            other => Err(Error::InvalidSpec(format!("unknown payload kind {other:?}"))),
        }
    }
}

pub const GRAM_SYMMETRY_TOL: f64 = 1e-5;

/// Per-layer representations and attention diagonals for one record.
///
/// `layers[l]` is the `m x d` hidden-state matrix or the `m x m` Gram matrix
/// of layer `l`; `attn_diag` is an `L x n x m` row-major tensor holding the
/// diagonal of every head's causal attention map.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub record_id: String,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub payload_kind: PayloadKind,
    pub layers: Vec<Matrix>,
    pub attn_diag: Vec<f64>,
    /// Token range `[start, end)` of the answer, empty if absent.
    pub answer_token_span: [usize; 2],
}

impl ActivationTrace {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn seq_len(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }

    /// Attention diagonals of one layer as `n` rows of length `m`.
    pub fn attn_layer(&self, layer: usize) -> Matrix {
        let m = self.seq_len();
        let n = self.num_heads;
        let start = layer * n * m;
        Matrix {
            rows: n,
            cols: m,
            data: self.attn_diag[start..start + n * m].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidTrace {
            record: self.record_id.clone(),
            reason,
        };
        let l = self.num_layers();
        let m = self.seq_len();
        if l == 0 {
            return Err(bad("no layers".into()));
        }
        if m == 0 {
            return Err(bad("empty sequence".into()));
        }
        if self.num_heads == 0 {
            return Err(bad("no attention heads".into()));
        }
        let width = match self.payload_kind {
            PayloadKind::Hidden => self.hidden_dim,
            PayloadKind::Gram => m,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.rows() != m || layer.cols() != width {
                return Err(bad(format!(
                    "layer {i} is {}x{}, expected {m}x{width}",
                    layer.rows(),
                    layer.cols()
                )));
            }
            if !layer.is_finite() {
                return Err(bad(format!("layer {i} has non-finite entries")));
            }
            if self.payload_kind == PayloadKind::Gram && layer.asymmetry() > GRAM_SYMMETRY_TOL {
                return Err(bad(format!("layer {i} Gram matrix is not symmetric")));
            }
        }
        if self.attn_diag.len() != l * self.num_heads * m {
            return Err(bad(format!(
                "attention tensor has {} values, expected {}",
                self.attn_diag.len(),
                l * self.num_heads * m
            )));
        }
        if let Some(v) = self.attn_diag.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(format!("attention diagonal entry {v} outside [0, 1]")));
        }
        let [s, e] = self.answer_token_span;
        if s > e || e > m {
            return Err(bad(format!("answer span [{s}, {e}) outside [0, {m}]")));
        }
        Ok(())
    }

    /// The same trace with every hidden layer replaced by its Gram matrix.
    pub fn to_gram(&self) -> ActivationTrace {
        match self.payload_kind {
            PayloadKind::Gram => self.clone(),
            PayloadKind::Hidden => ActivationTrace {
                payload_kind: PayloadKind::Gram,
                layers: self.layers.iter().map(Matrix::gram).collect(),
                ..self.clone()
            },
        }
    }
}
