//! Run configuration shared by every subcommand.
//!
//! Values come from, in increasing precedence: built-in defaults, a JSON file
//! given with `--config`, and command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use geohall_core::corpus::{Block, DatasetSpec, Domain, HallType, DEFAULT_PERTURBATION_OFFSETS};
use geohall_core::eval::GroupBy;
use geohall_core::geostats::Statistic;
use geohall_core::mocklm::{DomainScale, Effect, MockConfig};
use geohall_core::trace::PayloadKind;
use serde::{Deserialize, Serialize};

use crate::ght::Dtype;
use crate::pipeline::SpanMode;
use crate::{Error, Result};

/// Mock model settings. The mock is seeded with the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub effects: Vec<Effect>,
    pub domain_scales: Vec<DomainScale>,
    pub sibling_gain: f64,
}

impl Default for MockSettings {
    fn default() -> Self {
        let c = MockConfig::default();
        MockSettings {
            num_layers: c.num_layers,
            hidden_dim: c.hidden_dim,
            num_heads: c.num_heads,
            effects: c.effects,
            domain_scales: c.domain_scales,
            sibling_gain: c.sibling_gain,
        }
    }
}

impl MockSettings {
    pub fn to_config(&self, seed: u64) -> MockConfig {
        MockConfig {
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_heads: self.num_heads,
            seed,
            effects: self.effects.clone(),
            domain_scales: self.domain_scales.clone(),
            sibling_gain: self.sibling_gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Text => "txt",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Usage(format!("unknown format {other:?}, expected text, json or csv"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domains: Vec<Block>,
    pub types: Vec<HallType>,
    pub levels: Vec<u8>,
    pub seed: u64,
    pub perturbations: bool,
    pub perturbation_offsets: Vec<i64>,
    pub history_table: Option<PathBuf>,

    pub out_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
    pub stats: Option<PathBuf>,

    pub payload: PayloadKind,
    pub dtype: Dtype,
    pub mock: MockSettings,

    pub statistics: Vec<Statistic>,
    pub normalized: bool,
    pub span: SpanMode,
    pub group_by: GroupBy,
    pub baseline_relative: bool,

    pub format: ReportFormat,
    pub report: Option<PathBuf>,
    pub output: Option<PathBuf>,

    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domains: vec![Block::All],
            types: HallType::HALLUCINATIONS.to_vec(),
            levels: vec![1, 2, 3],
            seed: 0,
            perturbations: true,
            perturbation_offsets: DEFAULT_PERTURBATION_OFFSETS.to_vec(),
            history_table: None,
            out_dir: PathBuf::from("geohall-out"),
            dataset: None,
            trace_dir: None,
            stats: None,
            payload: PayloadKind::Hidden,
            dtype: Dtype::F32,
            mock: MockSettings::default(),
            statistics: Statistic::RAW.to_vec(),
            normalized: false,
            span: SpanMode::Full,
            group_by: GroupBy::Block,
            baseline_relative: false,
            format: ReportFormat::Text,
            report: None,
            output: None,
            log_level: "info".into(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            domains: self.domains.clone(),
            types: self.types.clone(),
            levels: self.levels.clone(),
            seed: self.seed,
            include_perturbations: self.perturbations,
            perturbation_offsets: self.perturbation_offsets.clone(),
        }
    }

    pub fn mock_config(&self) -> MockConfig {
        self.mock.to_config(self.seed)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out_dir.join("dataset.jsonl"))
    }

    pub fn trace_path(&self) -> PathBuf {
        self.trace_dir.clone().unwrap_or_else(|| self.out_dir.join("traces"))
    }

    /// Raw statistics CSV.
    pub fn stats_path(&self) -> PathBuf {
        self.stats.clone().unwrap_or_else(|| self.out_dir.join("stats.csv"))
    }

    pub fn norm_stats_path(&self) -> PathBuf {
        self.out_dir.join("stats-norm.csv")
    }

    /// Stem of the eval outputs: `report` or `report-norm`.
    pub fn report_stem(&self) -> &'static str {
        if self.normalized {
            "report-norm"
        } else {
            "report"
        }
    }

    pub fn distributions_name(&self) -> &'static str {
        if self.normalized {
            "distributions-norm.csv"
        } else {
            "distributions.csv"
        }
    }

    pub fn report_path(&self) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("{}.json", self.report_stem())))
    }
}

/// Parses `TYPE:LEVEL:LAYER:SCALE[:SHIFT]`.
pub fn parse_effect(s: &str) -> Result<Effect> {
    let bad = || Error::Usage(format!("effect {s:?} is not TYPE:LEVEL:LAYER:SCALE[:SHIFT]"));
    let parts: Vec<&str> = s.split(':').collect();
    if !(4..=5).contains(&parts.len()) {
        return Err(bad());
    }
    Ok(Effect {
        hall_type: parts[0].parse().map_err(|_| bad())?,
        level: parts[1].parse().map_err(|_| bad())?,
        target_layer: parts[2].parse().map_err(|_| bad())?,
        hidden_scale: parts[3].parse().map_err(|_| bad())?,
        attn_diag_shift: parts.get(4).map_or(Ok(0.0), |p| p.parse()).map_err(|_| bad())?,
    })
}

/// Parses `DOMAIN:SCALE`.
pub fn parse_domain_scale(s: &str) -> Result<DomainScale> {
    let bad = || Error::Usage(format!("domain scale {s:?} is not DOMAIN:SCALE"));
    let (d, v) = s.split_once(':').ok_or_else(bad)?;
    Ok(DomainScale {
        domain: d.parse::<Domain>().map_err(|_| bad())?,
        scale: v.parse().map_err(|_| bad())?,
    })
}
