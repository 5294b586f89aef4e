//! Hidden Score, Matrix Entropy and Attention Score.
//!
//! HS and ME depend on a layer only through the eigenvalues of its Gram matrix
//! `G = H Hᵀ`, so both can be computed from either the hidden states or a
//! stored Gram matrix. AS depends only on the diagonals of the causal
//! attention maps. All logarithms are natural.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::trace::{ActivationTrace, Matrix, PayloadKind};
use crate::{Error, Result};

/// Eigenvalues below `HS_EIGEN_FLOOR * λ_max` are raised to that floor.
pub const HS_EIGEN_FLOOR: f64 = 1e-12;
/// Attention diagonals below this are raised to it before taking logs.
pub const ATTN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "HS")]
    Hs,
    #[serde(rename = "ME")]
    Me,
    #[serde(rename = "AS")]
    As,
    #[serde(rename = "HS-Norm")]
    HsNorm,
    #[serde(rename = "ME-Norm")]
    MeNorm,
    #[serde(rename = "AS-Norm")]
    AsNorm,
}

impl Statistic {
    pub const RAW: [Statistic; 3] = [Statistic::Hs, Statistic::Me, Statistic::As];

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Hs => "HS",
            Statistic::Me => "ME",
            Statistic::As => "AS",
            Statistic::HsNorm => "HS-Norm",
            Statistic::MeNorm => "ME-Norm",
            Statistic::AsNorm => "AS-Norm",
        }
    }

    pub fn is_normalized(self) -> bool {
        matches!(self, Statistic::HsNorm | Statistic::MeNorm | Statistic::AsNorm)
    }

    pub fn normalized(self) -> Statistic {
        match self {
            Statistic::Hs | Statistic::HsNorm => Statistic::HsNorm,
            Statistic::Me | Statistic::MeNorm => Statistic::MeNorm,
            Statistic::As | Statistic::AsNorm => Statistic::AsNorm,
        }
    }

    pub fn raw(self) -> Statistic {
        match self {
            Statistic::Hs | Statistic::HsNorm => Statistic::Hs,
            Statistic::Me | Statistic::MeNorm => Statistic::Me,
            Statistic::As | Statistic::AsNorm => Statistic::As,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "HS" => Statistic::Hs,
            "ME" => Statistic::Me,
            "AS" => Statistic::As,
            "HS-NORM" => Statistic::HsNorm,
            "ME-NORM" => Statistic::MeNorm,
            "AS-NORM" => Statistic::AsNorm,
            _ => return Err(Error::InvalidSpec(format!("unknown statistic {s:?}"))),
        })
    }
}

/// Numerical events recorded per layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StatFlags {
    pub clamped_eigenvalues: bool,
    pub floored_attention: bool,
}

impl StatFlags {
    pub const CLAMPED: StatFlags = StatFlags {
        clamped_eigenvalues: true,
        floored_attention: false,
    };
    pub const FLOORED: StatFlags = StatFlags {
        clamped_eigenvalues: false,
        floored_attention: true,
    };

    pub fn is_empty(self) -> bool {
        !self.clamped_eigenvalues && !self.floored_attention
    }

    pub fn union(self, other: StatFlags) -> StatFlags {
        StatFlags {
            clamped_eigenvalues: self.clamped_eigenvalues || other.clamped_eigenvalues,
            floored_attention: self.floored_attention || other.floored_attention,
        }
    }
}

impl fmt::Display for StatFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.clamped_eigenvalues, self.floored_attention) {
            (true, true) => f.write_str("clamped_eigenvalues|floored_attention"),
            (true, false) => f.write_str("clamped_eigenvalues"),
            (false, true) => f.write_str("floored_attention"),
            (false, false) => Ok(()),
        }
    }
}

impl FromStr for StatFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut flags = StatFlags::default();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            match part {
                "clamped_eigenvalues" => flags.clamped_eigenvalues = true,
                "floored_attention" => flags.floored_attention = true,
                other => return Err(Error::InvalidSpec(format!("unknown flag {other:?}"))),
            }
        }
        Ok(flags)
    }
}

/// Gram eigenvalues, sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// Negative roundoff eigenvalues raised to zero.
    pub clamped_count: usize,
    /// `trace(G)`, computed directly from the input.
    pub trace_value: f64,
}

/// Eigenvalues of the Gram matrix of a layer.
///
/// For hidden states the eigenvalues are the squared singular values of `H`
/// (never forming `H Hᵀ`); for a stored Gram matrix they come from a
/// symmetric eigensolve.
pub fn gram_spectrum(layer: &Matrix, kind: PayloadKind) -> Result<SpectrumResult> {
    if layer.rows() == 0 {
        return Err(Error::InvalidSpec("empty sequence".into()));
    }
    if !layer.is_finite() {
        return Err(Error::NonFinite);
    }
    let (mut eig, trace_value) = match kind {
        PayloadKind::Hidden => {
            let tr = layer.data().iter().map(|v| v * v).sum();
            (linalg::gram_eigenvalues_of_rows(layer), tr)
        }
        PayloadKind::Gram => {
            if layer.rows() != layer.cols() {
                return Err(Error::InvalidSpec(format!(
                    "Gram matrix must be square, got {}x{}",
                    layer.rows(),
                    layer.cols()
                )));
            }
            let tr = (0..layer.rows()).map(|i| layer.get(i, i)).sum();
            (linalg::symmetric_eigenvalues(layer), tr)
        }
    };
    let mut clamped_count = 0;
    for v in &mut eig {
        if *v < 0.0 {
            *v = 0.0;
            clamped_count += 1;
        }
    }
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(SpectrumResult {
        eigenvalues: eig,
        clamped_count,
        trace_value,
    })
}

/// Sequence-normalized log-determinant of the Gram matrix, `(1/m) Σ log λ_i`.
///
/// Rank-deficient spectra (always the case when `m > d`) have their small
/// eigenvalues raised to `HS_EIGEN_FLOOR * λ_max`, which sets the
/// `clamped_eigenvalues` flag. The floor scales with the spectrum, so
/// `HS(cH) = HS(H) + 2 log|c|` holds with or without clamping.
pub fn hidden_score(spec: &SpectrumResult, m: usize) -> Result<(f64, StatFlags)> {
    if m != spec.eigenvalues.len() || m == 0 {
        return Err(Error::InvalidSpec(format!(
            "sequence length {m} does not match {} eigenvalues",
            spec.eigenvalues.len()
        )));
    }
    let lmax = spec.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    if lmax <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let floor = HS_EIGEN_FLOOR * lmax;
    let mut flags = StatFlags::default();
    let mut sum = 0.0;
    for &l in &spec.eigenvalues {
        let v = if l < floor {
            flags.clamped_eigenvalues = true;
            floor
        } else {
            l
        };
        sum += libm::log(v);
    }
    Ok((sum / m as f64, flags))
}

/// Shannon entropy of the trace-normalized spectrum, with `0 log 0 = 0`.
pub fn matrix_entropy(spec: &SpectrumResult) -> Result<f64> {
    let total: f64 = spec.eigenvalues.iter().sum();
    if spec.trace_value.is_nan() || spec.trace_value <= 0.0 || total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let h = spec
        .eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| {
            let q = l / total;
            -q * libm::log(q)
        })
        .sum::<f64>();
    // Rounding can leave -0.0 or a hair below zero for a rank-1 spectrum.
    Ok(h.max(0.0))
}

/// Mean log attention-map diagonal over `n` heads (rows) and `m` tokens
/// (columns).
pub fn attention_score(diag: &Matrix) -> Result<(f64, StatFlags)> {
    let count = diag.rows() * diag.cols();
    if count == 0 {
        return Err(Error::InvalidSpec("empty attention diagonal".into()));
    }
    let mut flags = StatFlags::default();
    let mut sum = 0.0;
    for &a in diag.data() {
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::AttentionOutOfRange(a));
        }
        let v = if a < ATTN_FLOOR {
            flags.floored_attention = true;
            ATTN_FLOOR
        } else {
            a
        };
        sum += libm::log(v);
    }
    Ok((sum / count as f64, flags))
}

/// One statistic at every layer of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStatProfile {
    pub record_id: String,
    pub statistic: Statistic,
    pub values: Vec<f64>,
    pub flags: Vec<StatFlags>,
}

impl LayerStatProfile {
    pub fn num_layers(&self) -> usize {
        self.values.len()
    }
}

/// Token range `[start, end)` a statistic is restricted to.
pub type TokenSpan = (usize, usize);

fn check_span(span: Option<TokenSpan>, m: usize) -> Result<TokenSpan> {
    match span {
        None => Ok((0, m)),
        Some((s, e)) if s < e && e <= m => Ok((s, e)),
        Some((start, end)) => Err(Error::SpanOutOfRange { start, end, len: m }),
    }
}

/// Computes each requested raw statistic at every layer. The Gram spectrum is
/// computed once per layer and shared by HS and ME.
pub fn stats_profiles(
    trace: &ActivationTrace,
    statistics: &[Statistic],
    span: Option<TokenSpan>,
) -> Result<Vec<LayerStatProfile>> {
    if let Some(s) = statistics.iter().find(|s| s.is_normalized()) {
        return Err(Error::InvalidSpec(format!("{s} is not a raw statistic")));
    }
    let m = trace.seq_len();
    let (start, end) = check_span(span, m)?;
    let want_spectrum = statistics.iter().any(|s| matches!(s, Statistic::Hs | Statistic::Me));
    let mut out: Vec<LayerStatProfile> = statistics
        .iter()
        .map(|&statistic| LayerStatProfile {
            record_id: trace.record_id.clone(),
            statistic,
            values: Vec::with_capacity(trace.num_layers()),
            flags: Vec::with_capacity(trace.num_layers()),
        })
        .collect();

    for (l, layer) in trace.layers.iter().enumerate() {
        let spectrum = if want_spectrum {
            let restricted;
            let view = if (start, end) == (0, m) {
                layer
            } else {
                restricted = match trace.payload_kind {
                    PayloadKind::Hidden => layer.row_slice(start, end),
                    PayloadKind::Gram => layer.principal(start, end),
                };
                &restricted
            };
            Some(gram_spectrum(view, trace.payload_kind).map_err(|e| e.at_layer(l))?)
        } else {
            None
        };
        for profile in &mut out {
            let (value, flags) = match profile.statistic {
                Statistic::Hs => {
                    let spec = spectrum.as_ref().expect("spectrum computed for HS");
                    hidden_score(spec, end - start).map_err(|e| e.at_layer(l))?
                }
                Statistic::Me => {
                    let spec = spectrum.as_ref().expect("spectrum computed for ME");
                    (matrix_entropy(spec).map_err(|e| e.at_layer(l))?, StatFlags::default())
                }
                Statistic::As => {
                    let mut diag = trace.attn_layer(l);
                    if (start, end) != (0, m) {
                        let n = diag.rows();
                        let mut data = Vec::with_capacity(n * (end - start));
                        for h in 0..n {
                            data.extend_from_slice(&diag.row(h)[start..end]);
                        }
                        diag = Matrix::new(n, end - start, data)?;
                    }
                    attention_score(&diag).map_err(|e| e.at_layer(l))?
                }
                _ => unreachable!("normalized statistics rejected above"),
            };
            profile.values.push(value);
            profile.flags.push(flags);
        }
    }
    Ok(out)
}

/// One statistic at every layer; see [`stats_profiles`].
pub fn stats_profile(
    trace: &ActivationTrace,
    statistic: Statistic,
    span: Option<TokenSpan>,
) -> Result<LayerStatProfile> {
    Ok(stats_profiles(trace, &[statistic], span)?.remove(0))
}
