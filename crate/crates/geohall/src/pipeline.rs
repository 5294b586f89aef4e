//! The stages behind each subcommand, as plain functions over in-memory data
//! and the on-disk formats.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use geohall_core::corpus::{build_dataset, Corpus, Dataset, DatasetSpec, HistoryTable, PrRecord};
use geohall_core::eval::{
    detection_table, distribution_summary, render_text, DistributionSummary, EvalReport, GroupBy,
    LabeledProfile,
};
use geohall_core::geostats::{stats_profiles, LayerStatProfile, Statistic};
use geohall_core::mocklm::{mock_extract, MockConfig};
use geohall_core::pnorm::{normalize_profile, PerturbationGroup};
use geohall_core::trace::PayloadKind;
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ght::Dtype;
use crate::store::{read_manifest, read_trace, write_manifest, write_trace, TraceManifestEntry};
use crate::{Error, Result};

/// Which tokens statistics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanMode {
    #[default]
    Full,
    Answer,
}

impl std::str::FromStr for SpanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SpanMode::Full),
            "answer" => Ok(SpanMode::Answer),
            other => Err(Error::Usage(format!("unknown span mode {other:?}, expected full or answer"))),
        }
    }
}

pub fn load_corpus(seed: u64, history_table: Option<&Path>) -> Result<Corpus> {
    match history_table {
        None => Ok(Corpus::bundled(seed)?),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(Error::io(path))?;
            let table = HistoryTable::parse(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: e.to_string(),
            })?;
            Ok(Corpus::with_history(&table))
        }
    }
}

pub fn generate(spec: &DatasetSpec, history_table: Option<&Path>) -> Result<Dataset> {
    spec.validate()?;
    let corpus = load_corpus(spec.seed, history_table)?;
    let ds = build_dataset(spec, &corpus)?;
    info!(
        "generated {} records ({} baselines)",
        ds.records.len(),
        ds.baselines().count()
    );
    Ok(ds)
}

/// Runs the mock model over `records` and writes a trace directory.
pub fn mock_extract_all(
    records: &[PrRecord],
    config: &MockConfig,
    payload: PayloadKind,
    dtype: Dtype,
    trace_dir: &Path,
) -> Result<Vec<TraceManifestEntry>> {
    config.validate()?;
    fs::create_dir_all(trace_dir).map_err(Error::io(trace_dir))?;
    let mut entries = records
        .par_iter()
        .map(|r| {
            let trace = mock_extract(r, config)?;
            let trace = match payload {
                PayloadKind::Hidden => trace,
                PayloadKind::Gram => trace.to_gram(),
            };
            write_trace(trace_dir, &trace, &r.labels(), dtype)
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(trace_dir, &mut entries)?;
    info!("wrote {} traces to {}", entries.len(), trace_dir.display());
    Ok(entries)
}

/// Raw statistics for every trace in `trace_dir`, sorted by record id.
pub fn compute_stats(trace_dir: &Path, statistics: &[Statistic], span: SpanMode) -> Result<Vec<LayerStatProfile>> {
    if let Some(s) = statistics.iter().find(|s| s.is_normalized()) {
        return Err(Error::Usage(format!("{s} is produced by normalize, not stats")));
    }
    let entries = read_manifest(trace_dir)?;
    let per_record = entries
        .par_iter()
        .map(|e| {
            let trace = read_trace(trace_dir, e)?;
            let span = match span {
                SpanMode::Full => None,
                SpanMode::Answer => Some((e.answer_token_span[0], e.answer_token_span[1])),
            };
            stats_profiles(&trace, statistics, span).map_err(|source| Error::Record {
                record: e.record_id.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out: Vec<LayerStatProfile> = per_record.into_iter().flatten().collect();
    info!("computed {} profiles from {} traces", out.len(), entries.len());
    Ok(out)
}

/// Perturbation-normalizes every record that has siblings, for every raw
/// statistic present. Records without siblings are skipped.
pub fn normalize_stats(profiles: &[LayerStatProfile], entries: &[TraceManifestEntry]) -> Result<Vec<LayerStatProfile>> {
    let mut siblings: BTreeMap<&str, Vec<(&str, i64)>> = BTreeMap::new();
    for e in entries {
        if let (Some(parent), Some(offset)) = (&e.labels.parent_id, e.labels.perturbation_offset) {
            siblings.entry(parent.as_str()).or_default().push((e.record_id.as_str(), offset));
        }
    }
    let index: HashMap<(&str, Statistic), &LayerStatProfile> = profiles
        .iter()
        .map(|p| ((p.record_id.as_str(), p.statistic), p))
        .collect();
    let mut statistics: Vec<Statistic> = profiles.iter().map(|p| p.statistic).filter(|s| !s.is_normalized()).collect();
    statistics.sort();
    statistics.dedup();

    let mut groups = Vec::new();
    for (parent, sibs) in &mut siblings {
        sibs.sort_by_key(|&(_, offset)| offset);
        for &statistic in &statistics {
            let lookup = |id: &str| {
                index
                    .get(&(id, statistic))
                    .map(|p| (*p).clone())
                    .ok_or_else(|| Error::Inconsistent(format!("no {statistic} profile for {id}")))
            };
            groups.push(PerturbationGroup {
                base: lookup(parent)?,
                siblings: sibs.iter().map(|(id, _)| lookup(id)).collect::<Result<_>>()?,
                offsets: sibs.iter().map(|&(_, o)| o).collect(),
            });
        }
    }
    let out = groups
        .par_iter()
        .map(|g| normalize_profile(g).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    info!("normalized {} profiles", out.len());
    Ok(out)
}

/// Joins profiles with their labels. Profiles with no manifest entry are an
/// error.
pub fn label_profiles(profiles: Vec<LayerStatProfile>, entries: &[TraceManifestEntry]) -> Result<Vec<LabeledProfile>> {
    let labels: HashMap<&str, &TraceManifestEntry> = entries.iter().map(|e| (e.record_id.as_str(), e)).collect();
    profiles
        .into_iter()
        .map(|p| {
            let entry = labels
                .get(p.record_id.as_str())
                .ok_or_else(|| Error::Inconsistent(format!("{} is not in the trace manifest", p.record_id)))?;
            let id = p.record_id.clone();
            LabeledProfile::from_labels(p, &entry.labels)
                .ok_or_else(|| Error::Inconsistent(format!("cannot derive block or domain of {id}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub normalized: bool,
    pub group_by: GroupBy,
    pub baseline_relative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutputs {
    pub report: EvalReport,
    pub distributions: Vec<(Statistic, DistributionSummary)>,
}

pub fn evaluate(profiles: &[LabeledProfile], statistics: &[Statistic], opts: EvalOptions) -> Result<EvalOutputs> {
    let report = detection_table(profiles, statistics, opts.normalized);
    for m in &report.missing {
        debug!("missing cell: {}", m.reason);
    }
    let mut distributions = Vec::new();
    for &s in &report.statistics {
        for d in distribution_summary(profiles, s, opts.group_by, opts.baseline_relative)? {
            distributions.push((s, d));
        }
    }
    if report.cells.is_empty() {
        return Err(Error::Core(geohall_core::Error::EmptyCondition(format!(
            "no evaluable cells for {:?}",
            report.statistics
        ))));
    }
    Ok(EvalOutputs { report, distributions })
}

pub fn report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Best-AUROC summary of every cell as CSV.
pub fn report_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Usage(e.to_string());
    w.write_record(["statistic", "domain", "hall_type", "level", "best_auroc", "best_layer", "tie", "n_positive", "n_negative"])
        .map_err(err)?;
    for c in &report.cells {
        w.write_record([
            c.statistic.to_string(),
            c.domain.to_string(),
            c.hall_type.to_string(),
            c.level.to_string(),
            c.best_auroc.to_string(),
            c.best_layer.map_or_else(String::new, |l| l.to_string()),
            c.tie.to_string(),
            c.n_positive.to_string(),
            c.n_negative.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `group,layer,mean,std` with groups named `{statistic}/{domain}/{type}/{level}`.
pub fn distributions_csv(distributions: &[(Statistic, DistributionSummary)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Usage(e.to_string());
    w.write_record(["group", "layer", "mean", "std"]).map_err(err)?;
    for (s, d) in distributions {
        let group = format!("{s}/{}", d.group);
        for (l, (mean, std)) in d.mean.iter().zip(&d.std).enumerate() {
            w.write_record([group.clone(), l.to_string(), mean.to_string(), std.to_string()])
                .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `{stem}.json`, `{stem}.txt` and the distribution CSV into `dir`.
pub fn write_eval_outputs(dir: &Path, stem: &str, dist_name: &str, outputs: &EvalOutputs) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let write = |name: String, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(Error::io(&path))
    };
    write(format!("{stem}.json"), report_json(&outputs.report))?;
    write(format!("{stem}.txt"), render_text(&outputs.report))?;
    write(dist_name.to_string(), distributions_csv(&outputs.distributions)?)?;
    Ok(())
}
