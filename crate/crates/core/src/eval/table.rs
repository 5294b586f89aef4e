use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{auroc, LabeledProfile};
use crate::corpus::{Block, HallType};
use crate::geostats::Statistic;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Layers whose AUROC is within this of the maximum count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Table columns: incorrectness at every level, the other types at level 3.
pub const TABLE_COLUMNS: [(HallType, u8); 7] = [
    (HallType::Incorrectness, 1),
    (HallType::Incorrectness, 2),
    (HallType::Incorrectness, 3),
    (HallType::Confidence, 3),
    (HallType::Irrelevance, 3),
    (HallType::Incoherence, 3),
    (HallType::Incompleteness, 3),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub domain: Block,
    pub hall_type: HallType,
    pub level: u8,
}

impl core::fmt::Display for Condition {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}/{}/{}", self.domain, self.hall_type, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub statistic: Statistic,
    pub domain: Block,
    pub hall_type: HallType,
    pub level: u8,
    pub auroc_per_layer: Vec<f64>,
    pub best_auroc: f64,
    /// Absent when the maximum is reached at more than one layer.
    pub best_layer: Option<usize>,
    pub tie: bool,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl EvalCell {
    /// `0.92 (30)`, or `0.00 (--)` on a tie.
    pub fn display(&self) -> String {
        match self.best_layer {
            Some(l) => format!("{:.2} ({l:02})", self.best_auroc),
            None => format!("{:.2} (--)", self.best_auroc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub statistic: Statistic,
    pub domain: Block,
    pub hall_type: HallType,
    pub level: u8,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub normalized: bool,
    pub statistics: Vec<Statistic>,
    pub domains: Vec<Block>,
    pub cells: Vec<EvalCell>,
    pub missing: Vec<MissingCell>,
}

impl EvalReport {
    pub fn cell(&self, statistic: Statistic, domain: Block, hall_type: HallType, level: u8) -> Option<&EvalCell> {
        self.cells.iter().find(|c| {
            c.statistic == statistic && c.domain == domain && c.hall_type == hall_type && c.level == level
        })
    }
}

/// Per-layer AUROC of the condition's records against the block's baselines.
/// Perturbation siblings are never part of either side.
pub fn layer_sweep(profiles: &[LabeledProfile], statistic: Statistic, condition: Condition) -> Result<EvalCell> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for p in profiles {
        if p.is_sibling || p.block != condition.domain || p.profile.statistic != statistic {
            continue;
        }
        if p.hall_type == HallType::Baseline {
            negatives.push(&p.profile.values);
        } else if p.hall_type == condition.hall_type && p.level == condition.level {
            positives.push(&p.profile.values);
        }
    }
    let name = || format!("{statistic} {condition}");
    if positives.is_empty() {
        return Err(Error::EmptyCondition(format!("{}: no hallucinated records", name())));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyCondition(format!("{}: no baseline records", name())));
    }
    let layers = positives[0].len();
    if layers == 0 || positives.iter().chain(&negatives).any(|v| v.len() != layers) {
        return Err(Error::EmptyCondition(format!("{}: inconsistent layer counts", name())));
    }

    let mut per_layer = Vec::with_capacity(layers);
    let mut pos = Vec::with_capacity(positives.len());
    let mut neg = Vec::with_capacity(negatives.len());
    for l in 0..layers {
        pos.clear();
        neg.clear();
        pos.extend(positives.iter().map(|v| v[l]));
        neg.extend(negatives.iter().map(|v| v[l]));
        per_layer.push(auroc(&pos, &neg).map_err(|e| e.at_layer(l))?);
    }

    let best = per_layer.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let at_best: Vec<usize> = (0..layers).filter(|&l| best - per_layer[l] <= TIE_TOL).collect();
    let tie = at_best.len() > 1;
    Ok(EvalCell {
        statistic,
        domain: condition.domain,
        hall_type: condition.hall_type,
        level: condition.level,
        best_auroc: best,
        best_layer: if tie { None } else { Some(at_best[0]) },
        tie,
        auroc_per_layer: per_layer,
        n_positive: positives.len(),
        n_negative: negatives.len(),
    })
}

/// Sweeps every (block, statistic, column) cell present in `profiles`.
///
/// `statistics` are raw statistics; with `normalized` the `-Norm` variants are
/// evaluated instead. Cells that cannot be computed are listed as missing.
pub fn detection_table(profiles: &[LabeledProfile], statistics: &[Statistic], normalized: bool) -> EvalReport {
    let mut stats: Vec<Statistic> = statistics
        .iter()
        .map(|s| if normalized { s.normalized() } else { s.raw() })
        .collect();
    stats.sort();
    stats.dedup();
    let mut domains: Vec<Block> = profiles.iter().map(|p| p.block).collect();
    domains.sort();
    domains.dedup();

    let mut cells = Vec::new();
    let mut missing = Vec::new();
    for &domain in &domains {
        for &statistic in &stats {
            for (hall_type, level) in TABLE_COLUMNS {
                let condition = Condition {
                    domain,
                    hall_type,
                    level,
                };
                match layer_sweep(profiles, statistic, condition) {
                    Ok(cell) => cells.push(cell),
                    Err(e) => missing.push(MissingCell {
                        statistic,
                        domain,
                        hall_type,
                        level,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        normalized,
        statistics: stats,
        domains,
        cells,
        missing,
    }
}

const LABEL_W: usize = 10;
const CELL_W: usize = 16;

/// Fixed-width rendering with one row per statistic and domain.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:LABEL_W$}", "");
    for (t, _) in TABLE_COLUMNS {
        let _ = write!(out, "{:>CELL_W$}", t.as_str());
    }
    out.push('\n');
    let _ = write!(out, "{:LABEL_W$}", "");
    for (_, l) in TABLE_COLUMNS {
        let _ = write!(out, "{:>CELL_W$}", format!("level {l}"));
    }
    out.push('\n');
    for &domain in &report.domains {
        out.push_str(domain.as_str());
        out.push('\n');
        for &statistic in &report.statistics {
            let _ = write!(out, "{:LABEL_W$}", format!("  {statistic}"));
            for (t, l) in TABLE_COLUMNS {
                let text = report
                    .cell(statistic, domain, t, l)
                    .map_or_else(|| "n/a".to_string(), EvalCell::display);
                let _ = write!(out, "{text:>CELL_W$}");
            }
            out.push('\n');
        }
    }
    if !report.missing.is_empty() {
        let _ = writeln!(out, "\n{} missing cell(s)", report.missing.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use crate::geostats::{LayerStatProfile, StatFlags};

    fn labeled(id: &str, t: HallType, level: u8, values: &[f64]) -> LabeledProfile {
        LabeledProfile {
            profile: LayerStatProfile {
                record_id: id.into(),
                statistic: Statistic::Hs,
                values: values.to_vec(),
                flags: alloc::vec![StatFlags::default(); values.len()],
            },
            block: Block::Math,
            source_domain: Domain::Math,
            hall_type: t,
            level,
            is_sibling: false,
        }
    }

    fn cond(t: HallType, level: u8) -> Condition {
        Condition {
            domain: Block::Math,
            hall_type: t,
            level,
        }
    }

    #[test]
    fn identical_sides_tie_at_half() {
        let ps = [
            labeled("a", HallType::Baseline, 0, &[1.0, 2.0, 3.0]),
            labeled("b", HallType::Incorrectness, 1, &[1.0, 2.0, 3.0]),
        ];
        let cell = layer_sweep(&ps, Statistic::Hs, cond(HallType::Incorrectness, 1)).unwrap();
        assert_eq!(cell.best_auroc, 0.5);
        assert!(cell.tie);
        assert_eq!(cell.best_layer, None);
        assert_eq!(cell.display(), "0.50 (--)");
    }

    #[test]
    fn single_layer_picks_zero() {
        let ps = [
            labeled("a", HallType::Baseline, 0, &[1.0]),
            labeled("b", HallType::Incorrectness, 1, &[2.0]),
        ];
        let cell = layer_sweep(&ps, Statistic::Hs, cond(HallType::Incorrectness, 1)).unwrap();
        assert_eq!(cell.best_layer, Some(0));
        assert!(!cell.tie);
        assert_eq!(cell.display(), "1.00 (00)");
    }

    #[test]
    fn siblings_and_other_levels_excluded() {
        let mut sib = labeled("s", HallType::Baseline, 0, &[100.0]);
        sib.is_sibling = true;
        let ps = [
            labeled("a", HallType::Baseline, 0, &[1.0]),
            sib,
            labeled("b", HallType::Incorrectness, 1, &[2.0]),
            labeled("c", HallType::Incorrectness, 2, &[-5.0]),
        ];
        let cell = layer_sweep(&ps, Statistic::Hs, cond(HallType::Incorrectness, 1)).unwrap();
        assert_eq!((cell.n_positive, cell.n_negative), (1, 1));
        assert_eq!(cell.best_auroc, 1.0);
    }

    #[test]
    fn empty_side_is_named() {
        let ps = [labeled("a", HallType::Baseline, 0, &[1.0])];
        let err = layer_sweep(&ps, Statistic::Hs, cond(HallType::Confidence, 3)).unwrap_err();
        assert!(err.to_string().contains("math/confidence/3"), "{err}");
    }

    #[test]
    fn table_lists_missing_cells() {
        let ps = [
            labeled("a", HallType::Baseline, 0, &[1.0, 0.0]),
            labeled("b", HallType::Incorrectness, 1, &[2.0, 0.0]),
        ];
        let report = detection_table(&ps, &[Statistic::Hs], false);
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.missing.len(), 6);
        let text = render_text(&report);
        assert!(text.contains("1.00 (00)"));
        assert!(text.contains("n/a"));
        let norm = detection_table(&ps, &[Statistic::Hs], true);
        assert_eq!(norm.statistics, [Statistic::HsNorm]);
        assert!(norm.cells.is_empty());
    }
}
