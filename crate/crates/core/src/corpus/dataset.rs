use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{render_record, Block, Corpus, HallType, PrRecord, QaPair, RecordSlot};
use crate::hash::keyed_rng;
use crate::{Error, Result};

pub const DEFAULT_PERTURBATION_OFFSETS: [i64; 6] = [-5, -2, -1, 1, 2, 5];

/// Pairs drawn from each domain into the `all` block.
const ALL_MATH: usize = 75;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub domains: Vec<Block>,
    pub types: Vec<HallType>,
    pub levels: Vec<u8>,
    pub seed: u64,
    pub include_perturbations: bool,
    pub perturbation_offsets: Vec<i64>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            domains: Block::ALL.to_vec(),
            types: HallType::HALLUCINATIONS.to_vec(),
            levels: alloc::vec![1, 2, 3],
            seed: 0,
            include_perturbations: true,
            perturbation_offsets: DEFAULT_PERTURBATION_OFFSETS.to_vec(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::InvalidSpec("no domains selected".into()));
        }
        if self.types.is_empty() {
            return Err(Error::InvalidSpec("no hallucination types selected".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidSpec("no levels selected".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(1..=3).contains(*l)) {
            return Err(Error::InvalidSpec(format!("level {l} is outside 1-3")));
        }
        if self.perturbation_offsets.contains(&0) {
            return Err(Error::InvalidSpec("perturbation offsets contain 0".into()));
        }
        for (i, o) in self.perturbation_offsets.iter().enumerate() {
            if self.perturbation_offsets[..i].contains(o) {
                return Err(Error::InvalidSpec(format!("duplicate perturbation offset {o}")));
            }
        }
        Ok(())
    }

    /// Selected blocks, deduplicated, in canonical order.
    fn blocks(&self) -> Vec<Block> {
        let mut b = self.domains.clone();
        b.sort();
        b.dedup();
        b
    }

    /// Selected types (without baseline), deduplicated, in column order.
    fn hallucination_types(&self) -> Vec<HallType> {
        HallType::HALLUCINATIONS
            .into_iter()
            .filter(|t| self.types.contains(t))
            .collect()
    }

    fn sorted_levels(&self) -> Vec<u8> {
        let mut l = self.levels.clone();
        l.sort();
        l.dedup();
        l
    }
}

/// A rendered dataset. Records are grouped per QA pair: baseline first, then
/// each (type, level), each followed by its perturbation siblings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub seed: u64,
    pub records: Vec<PrRecord>,
}

/// One line of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifestEntry {
    #[serde(flatten)]
    pub record: PrRecord,
    pub seed: u64,
}

impl Dataset {
    pub fn manifest(&self) -> impl Iterator<Item = DatasetManifestEntry> + '_ {
        self.records.iter().map(|r| DatasetManifestEntry {
            record: r.clone(),
            seed: self.seed,
        })
    }

    pub fn baselines(&self) -> impl Iterator<Item = &PrRecord> {
        self.records
            .iter()
            .filter(|r| r.hall_type == HallType::Baseline && r.perturbation_offset.is_none())
    }
}

/// QA pairs of one block, paired with their index inside the block.
fn block_pairs(block: Block, corpus: &Corpus, seed: u64) -> Vec<&QaPair> {
    match block {
        Block::Math => corpus.math.iter().collect(),
        Block::History => corpus.history.iter().collect(),
        Block::Counting => corpus.counting.iter().collect(),
        Block::All => {
            let mut idx: Vec<usize> = (0..corpus.math.len()).collect();
            idx.shuffle(&mut keyed_rng(seed, "all/math-subset"));
            let mut chosen: Vec<usize> = idx.into_iter().take(ALL_MATH).collect();
            chosen.sort_unstable();
            chosen
                .into_iter()
                .map(|i| &corpus.math[i])
                .chain(corpus.history.iter())
                .chain(corpus.counting.iter())
                .collect()
        }
    }
}

/// Renders every selected record. Each record draws from its own generator
/// keyed by `(seed, record_id)`, so output does not depend on iteration order.
pub fn build_dataset(spec: &DatasetSpec, corpus: &Corpus) -> Result<Dataset> {
    spec.validate()?;
    let types = spec.hallucination_types();
    let levels = spec.sorted_levels();
    let mut records = Vec::new();

    for block in spec.blocks() {
        for (qa_index, qa) in block_pairs(block, corpus, spec.seed).into_iter().enumerate() {
            let slot = RecordSlot { block, qa_index };
            let mut emit = |hall_type: HallType, level: u8| -> Result<()> {
                let id = slot.record_id(hall_type, level);
                let mut rng = keyed_rng(spec.seed, &id);
                let record = render_record(qa, slot, hall_type, level, corpus, &mut rng)?;
                let siblings = if spec.include_perturbations
                    && matches!(hall_type, HallType::Baseline | HallType::Incorrectness)
                {
                    build_perturbation_set(&record, &spec.perturbation_offsets)?
                } else {
                    Vec::new()
                };
                records.push(record);
                records.extend(siblings);
                Ok(())
            };
            emit(HallType::Baseline, 0)?;
            for &t in &types {
                for &l in &levels {
                    emit(t, l)?;
                }
            }
        }
    }

    Ok(Dataset {
        seed: spec.seed,
        records,
    })
}

/// Copies of `record` whose answer digits are shifted by each offset.
pub fn build_perturbation_set(record: &PrRecord, offsets: &[i64]) -> Result<Vec<PrRecord>> {
    if offsets.is_empty() {
        return Ok(Vec::new());
    }
    if !record.has_answer() {
        return Err(Error::EmptyAnswerSpan(record.record_id.clone()));
    }
    let [start, end] = record.answer_char_span;
    let value = record.rendered_answer().ok_or_else(|| Error::InvalidTrace {
        record: record.record_id.clone(),
        reason: format!(
            "answer span {:?} does not hold an integer",
            record.response_text.get(start..end)
        ),
    })?;

    Ok(offsets
        .iter()
        .map(|&o| {
            let digits = (value + o).to_string();
            let mut text = String::with_capacity(record.response_text.len() + 2);
            text.push_str(&record.response_text[..start]);
            text.push_str(&digits);
            text.push_str(&record.response_text[end..]);
            PrRecord {
                record_id: format!("{}-p{}", record.record_id, o),
                response_text: text,
                answer_char_span: [start, start + digits.len()],
                perturbation_offset: Some(o),
                parent_id: Some(record.record_id.clone()),
                ..record.clone()
            }
        })
        .collect())
}
