//! Trace directories and JSON-lines manifests.
//!
//! A trace directory holds `manifest.jsonl` plus one subdirectory per record:
//! `{record_id}/L{ll}.{hidden|gram}.ght` for each layer and
//! `{record_id}/attn.ght` for the `L x n x m` attention diagonals.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Component, Path};

use geohall_core::corpus::{DatasetManifestEntry, PrRecord, RecordLabels};
use geohall_core::trace::{ActivationTrace, Matrix, PayloadKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ght::{read_tensor, write_tensor, Dtype};
use crate::{Error, Result};

pub const TRACE_MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFiles {
    /// One path per layer, relative to the trace directory.
    pub layers: Vec<String>,
    pub attn: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceManifestEntry {
    pub record_id: String,
    pub files: TraceFiles,
    #[serde(rename = "L")]
    pub num_layers: usize,
    #[serde(rename = "m")]
    pub seq_len: usize,
    #[serde(rename = "d")]
    pub hidden_dim: usize,
    #[serde(rename = "n")]
    pub num_heads: usize,
    pub dtype: Dtype,
    pub payload_kind: PayloadKind,
    pub answer_token_span: [usize; 2],
    #[serde(flatten)]
    pub labels: RecordLabels,
}

impl TraceManifestEntry {
    fn layer_dims(&self) -> [u64; 2] {
        let width = match self.payload_kind {
            PayloadKind::Hidden => self.hidden_dim,
            PayloadKind::Gram => self.seq_len,
        };
        [self.seq_len as u64, width as u64]
    }
}

fn check_record_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(format!("record id {id:?} is not usable as a directory name")))
    }
}

fn check_relative(dir: &Path, rel: &str) -> Result<()> {
    let ok = Path::new(rel).components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            path: dir.join(TRACE_MANIFEST),
            line: 0,
            reason: format!("payload path {rel:?} escapes the trace directory"),
        })
    }
}

/// Writes a trace's tensor files under `dir` and returns its manifest entry.
/// The manifest itself is written separately by [`write_manifest`].
pub fn write_trace(
    dir: &Path,
    trace: &ActivationTrace,
    labels: &RecordLabels,
    dtype: Dtype,
) -> Result<TraceManifestEntry> {
    trace.validate()?;
    check_record_id(&trace.record_id)?;
    let rec_dir = dir.join(&trace.record_id);
    fs::create_dir_all(&rec_dir).map_err(Error::io(&rec_dir))?;

    let kind = trace.payload_kind;
    let mut layers = Vec::with_capacity(trace.num_layers());
    for (l, layer) in trace.layers.iter().enumerate() {
        let rel = format!("{}/L{l:02}.{kind}.ght", trace.record_id);
        let dims = [layer.rows() as u64, layer.cols() as u64];
        write_tensor(&dir.join(&rel), dtype, &dims, layer.data())?;
        layers.push(rel);
    }
    let attn = format!("{}/attn.ght", trace.record_id);
    let (l, n, m) = (trace.num_layers(), trace.num_heads, trace.seq_len());
    write_tensor(&dir.join(&attn), dtype, &[l as u64, n as u64, m as u64], &trace.attn_diag)?;

    Ok(TraceManifestEntry {
        record_id: trace.record_id.clone(),
        files: TraceFiles { layers, attn },
        num_layers: l,
        seq_len: m,
        hidden_dim: trace.hidden_dim,
        num_heads: n,
        dtype,
        payload_kind: kind,
        answer_token_span: trace.answer_token_span,
        labels: labels.clone(),
    })
}

/// Loads a trace, checking every file against the manifest entry.
pub fn read_trace(dir: &Path, entry: &TraceManifestEntry) -> Result<ActivationTrace> {
    if entry.files.layers.len() != entry.num_layers {
        return Err(Error::Parse {
            path: dir.join(TRACE_MANIFEST),
            line: 0,
            reason: format!(
                "{}: {} layer files for L={}",
                entry.record_id,
                entry.files.layers.len(),
                entry.num_layers
            ),
        });
    }
    let dims = entry.layer_dims();
    let mut layers = Vec::with_capacity(entry.num_layers);
    let load = |rel: &str, dims: &[u64]| -> Result<Vec<f64>> {
        check_relative(dir, rel)?;
        let path = dir.join(rel);
        let t = read_tensor(&path, Some(dims))?;
        if t.dtype != entry.dtype {
            return Err(Error::DtypeMismatch {
                path,
                expected: entry.dtype,
                found: t.dtype,
            });
        }
        Ok(t.data)
    };
    for rel in &entry.files.layers {
        let data = load(rel, &dims)?;
        layers.push(Matrix::new(entry.seq_len, dims[1] as usize, data)?);
    }
    let attn_dims = [entry.num_layers as u64, entry.num_heads as u64, entry.seq_len as u64];
    let attn_diag = load(&entry.files.attn, &attn_dims)?;
    let trace = ActivationTrace {
        record_id: entry.record_id.clone(),
        hidden_dim: entry.hidden_dim,
        num_heads: entry.num_heads,
        payload_kind: entry.payload_kind,
        layers,
        attn_diag,
        answer_token_span: entry.answer_token_span,
    };
    trace.validate()?;
    Ok(trace)
}

/// Writes items one JSON object per line.
pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Reads a JSON-lines file, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `manifest.jsonl` sorted by record id.
pub fn write_manifest(dir: &Path, entries: &mut [TraceManifestEntry]) -> Result<()> {
    entries.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    write_jsonl(&dir.join(TRACE_MANIFEST), entries.iter())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<TraceManifestEntry>> {
    let path = dir.join(TRACE_MANIFEST);
    let entries: Vec<TraceManifestEntry> = read_jsonl(&path)?;
    let mut seen = HashSet::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let [s, end] = e.answer_token_span;
        if s > end || end > e.seq_len {
            return Err(Error::Parse {
                path: path.clone(),
                line: i + 1,
                reason: format!("{}: answer span [{s}, {end}) outside [0, {}]", e.record_id, e.seq_len),
            });
        }
        if !seen.insert(e.record_id.as_str()) {
            return Err(Error::Parse {
                path: path.clone(),
                line: i + 1,
                reason: format!("duplicate record {}", e.record_id),
            });
        }
    }
    Ok(entries)
}

pub fn write_dataset(path: &Path, entries: &[DatasetManifestEntry]) -> Result<()> {
    write_jsonl(path, entries)
}

pub fn read_dataset(path: &Path) -> Result<Vec<PrRecord>> {
    let entries: Vec<DatasetManifestEntry> = read_jsonl(path)?;
    Ok(entries.into_iter().map(|e| e.record).collect())
}
