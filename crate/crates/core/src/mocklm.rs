//! Deterministic stand-in for a causal language model.
//!
//! Hidden vectors and attention diagonals are hash-keyed pseudo-random values,
//! so traces are reproducible bit for bit on every platform. Configured effects
//! then rescale hidden states and shift attention at chosen layers, which gives
//! closed-form expectations downstream (scaling a layer by `c` moves HS by
//! exactly `2 log c`).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Domain, HallType, PrRecord};
use crate::hash::{fnv1a, mix, splitmix64, unit_f64};
use crate::trace::{ActivationTrace, Matrix, PayloadKind};
use crate::{Error, Result};

/// Appended to incompleteness records, which end early.
pub const EOT_TOKEN: &str = "<eot>";

const ATTN_TAG: u64 = 0x6174_746e;
const ATTN_MIN: f64 = 0.02;
const SHIFTED_ATTN_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    /// Byte range in the source text.
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and punctuation.
///
/// ASCII alphanumeric runs are single tokens, and a `-` directly followed by a
/// digit starts a number token. Any other non-space character stands alone.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        let signed = c == '-' && bytes.get(start + 1).is_some_and(u8::is_ascii_digit);
        let mut end = start + c.len_utf8();
        if c.is_ascii_alphanumeric() || signed {
            while let Some(&(i, next)) = chars.peek() {
                if !next.is_ascii_alphanumeric() {
                    break;
                }
                end = i + 1;
                chars.next();
            }
        }
        out.push(Token {
            text: &text[start..end],
            start,
            end,
        });
    }
    out
}

/// Scales hidden states and shifts attention diagonals of matching records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub hall_type: HallType,
    pub level: u8,
    pub target_layer: usize,
    pub hidden_scale: f64,
    pub attn_diag_shift: f64,
}

/// Scales every record of one source domain at every layer, perturbation
/// siblings included. Shifts HS by `2 log scale` across the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScale {
    pub domain: Domain,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub seed: u64,
    pub effects: Vec<Effect>,
    pub domain_scales: Vec<DomainScale>,
    /// Sibling answer rows are scaled by `1 + sibling_gain * |offset|`.
    pub sibling_gain: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            num_layers: 8,
            hidden_dim: 32,
            num_heads: 4,
            seed: 0,
            effects: Vec::new(),
            domain_scales: Vec::new(),
            sibling_gain: 0.25,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMockConfig(msg));
        if self.num_layers == 0 || self.hidden_dim == 0 || self.num_heads == 0 {
            return bad(format!(
                "L, d and n must be positive, got L={} d={} n={}",
                self.num_layers, self.hidden_dim, self.num_heads
            ));
        }
        for e in &self.effects {
            let valid_level = match e.hall_type {
                HallType::Baseline => e.level == 0,
                _ => (1..=3).contains(&e.level),
            };
            if !valid_level {
                return bad(format!("effect on {} has invalid level {}", e.hall_type, e.level));
            }
            if e.target_layer >= self.num_layers {
                return bad(format!(
                    "effect target layer {} outside [0, {})",
                    e.target_layer, self.num_layers
                ));
            }
            if !(e.hidden_scale.is_finite() && e.hidden_scale > 0.0) {
                return bad(format!("hidden_scale must be positive, got {}", e.hidden_scale));
            }
            if !e.attn_diag_shift.is_finite() || e.attn_diag_shift.abs() >= 1.0 {
                return bad(format!("attn_diag_shift must lie in (-1, 1), got {}", e.attn_diag_shift));
            }
        }
        for s in &self.domain_scales {
            if !(s.scale.is_finite() && s.scale > 0.0) {
                return bad(format!("scale for {} must be positive, got {}", s.domain, s.scale));
            }
        }
        if !(self.sibling_gain.is_finite() && self.sibling_gain >= 0.0) {
            return bad(format!("sibling_gain must be non-negative, got {}", self.sibling_gain));
        }
        Ok(())
    }
}

/// The token sequence a record is teacher-forced as, with the answer's token
/// range `[start, end)`.
pub fn record_tokens(record: &PrRecord) -> Result<(Vec<String>, [usize; 2])> {
    let response = tokenize(&record.response_text);
    if response.is_empty() {
        return Err(Error::EmptyResponse(record.record_id.clone()));
    }
    let prompt = tokenize(&record.prompt_text);
    let offset = prompt.len();
    let [cs, ce] = record.answer_char_span;
    let span = if cs < ce {
        let first = response.iter().position(|t| t.end > cs);
        let last = response.iter().rposition(|t| t.start < ce);
        match (first, last) {
            (Some(f), Some(l)) if f <= l => [offset + f, offset + l + 1],
            _ => {
                return Err(Error::InvalidTrace {
                    record: record.record_id.clone(),
                    reason: format!("answer span [{cs}, {ce}) covers no token"),
                })
            }
        }
    } else {
        let at = response.iter().position(|t| t.start >= cs).unwrap_or(response.len());
        [offset + at, offset + at]
    };
    let mut tokens: Vec<String> = prompt.iter().chain(&response).map(|t| String::from(t.text)).collect();
    if record.hall_type == HallType::Incompleteness {
        tokens.push(String::from(EOT_TOKEN));
    }
    Ok((tokens, span))
}

fn hidden_row(out: &mut [f64], token: u64, pos: usize, layer: usize, seed: u64) {
    let mut state = mix(&[seed, token, pos as u64, layer as u64]);
    let half_width = libm::sqrt(3.0);
    for v in out {
        let u = unit_f64(splitmix64(&mut state));
        // f32-representable, so unscaled traces store losslessly as f32
        *v = f64::from(((2.0 * u - 1.0) * half_width) as f32);
    }
}

fn attn_value(token: u64, pos: usize, layer: usize, head: usize, seed: u64) -> f64 {
    if pos == 0 {
        return 1.0;
    }
    let u = unit_f64(mix(&[seed, ATTN_TAG, token, pos as u64, layer as u64, head as u64]));
    f64::from((ATTN_MIN + (1.0 - ATTN_MIN) * u) as f32).min(1.0)
}

/// Synthesizes the activation trace of one record (hidden-state payload).
pub fn mock_extract(record: &PrRecord, config: &MockConfig) -> Result<ActivationTrace> {
    config.validate()?;
    let (tokens, span) = record_tokens(record)?;
    let keys: Vec<u64> = tokens.iter().map(|t| fnv1a(t.as_bytes())).collect();
    let (l_count, d, n, m) = (config.num_layers, config.hidden_dim, config.num_heads, tokens.len());
    let seed = config.seed;

    let sibling = record.perturbation_offset;
    let effects: Vec<&Effect> = if sibling.is_some() {
        Vec::new()
    } else {
        config
            .effects
            .iter()
            .filter(|e| e.hall_type == record.hall_type && e.level == record.level)
            .collect()
    };
    let domain_scale: f64 = record
        .source_domain()
        .map(|dom| config.domain_scales.iter().filter(|s| s.domain == dom).map(|s| s.scale).product())
        .unwrap_or(1.0);

    let mut layers = Vec::with_capacity(l_count);
    let mut attn_diag = Vec::with_capacity(l_count * n * m);
    for layer in 0..l_count {
        let mut h = Matrix::zeros(m, d);
        for (pos, &key) in keys.iter().enumerate() {
            hidden_row(h.row_mut(pos), key, pos, layer, seed);
        }
        if let Some(offset) = sibling {
            let gain = 1.0 + config.sibling_gain * offset.unsigned_abs() as f64;
            for pos in span[0]..span[1] {
                h.row_mut(pos).iter_mut().for_each(|v| *v *= gain);
            }
        }
        let mut scale = domain_scale;
        let mut shift = 0.0;
        for e in effects.iter().filter(|e| e.target_layer == layer) {
            scale *= e.hidden_scale;
            shift += e.attn_diag_shift;
        }
        if scale != 1.0 {
            h.scale(scale);
        }
        layers.push(h);

        for head in 0..n {
            for (pos, &key) in keys.iter().enumerate() {
                let mut a = attn_value(key, pos, layer, head, seed);
                if shift != 0.0 {
                    a = (a + shift).clamp(SHIFTED_ATTN_MIN, 1.0);
                }
                attn_diag.push(a);
            }
        }
    }

    let trace = ActivationTrace {
        record_id: record.record_id.clone(),
        hidden_dim: d,
        num_heads: n,
        payload_kind: PayloadKind::Hidden,
        layers,
        attn_diag,
        answer_token_span: span,
    };
    trace.validate()?;
    Ok(trace)
}
