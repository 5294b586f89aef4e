//! Per-layer statistics as CSV: `record_id,statistic,layer,value,flags`.
//!
//! Values use the shortest decimal that round-trips to the same f64, so a
//! write/read cycle is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use geohall_core::geostats::{LayerStatProfile, StatFlags, Statistic};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row {
    record_id: String,
    statistic: String,
    layer: usize,
    value: String,
    flags: String,
}

/// Writes profiles sorted by record id, then statistic, then layer.
pub fn write_stats(path: &Path, profiles: &[LayerStatProfile]) -> Result<()> {
    let mut order: Vec<&LayerStatProfile> = profiles.iter().collect();
    order.sort_by(|a, b| (&a.record_id, a.statistic).cmp(&(&b.record_id, b.statistic)));
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    };
    for p in order {
        for (layer, (v, f)) in p.values.iter().zip(&p.flags).enumerate() {
            w.serialize(Row {
                record_id: p.record_id.clone(),
                statistic: p.statistic.to_string(),
                layer,
                value: v.to_string(),
                flags: f.to_string(),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(Error::io(path))
}

/// Reads profiles back. Each (record, statistic) must list layers `0..L`
/// exactly once.
pub fn read_stats(path: &Path) -> Result<Vec<LayerStatProfile>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut r = csv::Reader::from_reader(file);
    let mut grouped: BTreeMap<(String, Statistic), BTreeMap<usize, (f64, StatFlags)>> = BTreeMap::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let bad = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let statistic: Statistic = row.statistic.parse().map_err(|e: geohall_core::Error| bad(e.to_string()))?;
        let value: f64 = row.value.parse().map_err(|_| bad(format!("bad value {:?}", row.value)))?;
        if !value.is_finite() {
            return Err(bad(format!("non-finite value {value}")));
        }
        let flags: StatFlags = row.flags.parse().map_err(|e: geohall_core::Error| bad(e.to_string()))?;
        let layers = grouped.entry((row.record_id.clone(), statistic)).or_default();
        if layers.insert(row.layer, (value, flags)).is_some() {
            return Err(bad(format!("duplicate layer {} for {} {statistic}", row.layer, row.record_id)));
        }
    }
    let mut out = Vec::with_capacity(grouped.len());
    for ((record_id, statistic), layers) in grouped {
        if layers.keys().enumerate().any(|(i, &l)| i != l) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("{record_id} {statistic}: layers are not contiguous from 0"),
            });
        }
        let (values, flags) = layers.into_values().unzip();
        out.push(LayerStatProfile {
            record_id,
            statistic,
            values,
            flags,
        });
    }
    Ok(out)
}
