//! Evaluation protocol: per-layer AUROC with a fixed score orientation,
//! best-layer selection with tie reporting, detection tables and per-layer
//! distribution summaries.

mod auroc;
mod distribution;
mod table;

use crate::corpus::{Block, Domain, HallType, RecordLabels};
use crate::geostats::LayerStatProfile;

pub use auroc::auroc;
pub use distribution::{distribution_summary, DistributionSummary, GroupBy, GroupKey};
pub use table::{
    detection_table, layer_sweep, render_text, Condition, EvalCell, EvalReport, MissingCell,
    REPORT_SCHEMA_VERSION, TABLE_COLUMNS, TIE_TOL,
};

/// A statistic profile together with the labels evaluation needs.
#[derive(Debug, Clone)]
pub struct LabeledProfile {
    pub profile: LayerStatProfile,
    pub block: Block,
    pub source_domain: Domain,
    pub hall_type: HallType,
    pub level: u8,
    pub is_sibling: bool,
}

impl LabeledProfile {
    /// Labels a profile from its record id (block) and record labels.
    /// Returns `None` if either cannot be resolved.
    pub fn from_labels(profile: LayerStatProfile, labels: &RecordLabels) -> Option<Self> {
        Some(LabeledProfile {
            block: Block::from_record_id(&profile.record_id)?,
            source_domain: labels.source_domain()?,
            hall_type: labels.hall_type,
            level: labels.level,
            is_sibling: labels.is_sibling(),
            profile,
        })
    }
}
