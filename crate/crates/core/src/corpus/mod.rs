//! Synthetic question/answer corpora and prompt/response records.
//!
//! Every QA pair has a numeric answer. Records are rendered from the template
//!
//! ```text
//! P: "{prompt_question}"
//! R: "The answer to '{response_question}' is {conf_mod} {answer + answer_offset}."
//! ```
//!
//! and each hallucination type perturbs one part of it.

mod dataset;
mod history;
mod render;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dataset::{
    build_dataset, build_perturbation_set, Dataset, DatasetManifestEntry, DatasetSpec,
    DEFAULT_PERTURBATION_OFFSETS,
};
pub use history::{HistoryEntry, HistoryTable, BUNDLED_HISTORY_CSV};
pub use render::{
    confidence_modifier, incoherence_offset_range, incorrectness_offset_range, render_record,
    response_sentence, RecordSlot,
};

/// Source domain of a QA pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Math,
    History,
    Counting,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Math, Domain::History, Domain::Counting];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Math => "math",
            Domain::History => "history",
            Domain::Counting => "counting",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "math" => Ok(Domain::Math),
            "history" => Ok(Domain::History),
            "counting" => Ok(Domain::Counting),
            other => Err(Error::InvalidSpec(format!("unknown domain {other:?}"))),
        }
    }
}

/// A dataset block: one of the three domains, or the balanced `all` mix.
///
/// Evaluation rows are keyed by block; negatives for a block are the
/// baseline records rendered inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Math,
    History,
    Counting,
    All,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Math, Block::History, Block::Counting, Block::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::Math => "math",
            Block::History => "history",
            Block::Counting => "counting",
            Block::All => "all",
        }
    }

    /// Recovers the block from a `{block}-{qa_index}-...` record id.
    pub fn from_record_id(record_id: &str) -> Option<Block> {
        record_id.split('-').next()?.parse().ok()
    }
}

impl From<Domain> for Block {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Math => Block::Math,
            Domain::History => Block::History,
            Domain::Counting => Block::Counting,
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Block::All),
            other => other.parse::<Domain>().map(Block::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HallType {
    Baseline,
    Incorrectness,
    Confidence,
    Irrelevance,
    Incoherence,
    Incompleteness,
}

impl HallType {
    /// The five hallucination types, in table column order.
    pub const HALLUCINATIONS: [HallType; 5] = [
        HallType::Incorrectness,
        HallType::Confidence,
        HallType::Irrelevance,
        HallType::Incoherence,
        HallType::Incompleteness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HallType::Baseline => "baseline",
            HallType::Incorrectness => "incorrectness",
            HallType::Confidence => "confidence",
            HallType::Irrelevance => "irrelevance",
            HallType::Incoherence => "incoherence",
            HallType::Incompleteness => "incompleteness",
        }
    }
}

impl fmt::Display for HallType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HallType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => HallType::Baseline,
            "incorrectness" => HallType::Incorrectness,
            "confidence" => HallType::Confidence,
            "irrelevance" => HallType::Irrelevance,
            "incoherence" => HallType::Incoherence,
            "incompleteness" => HallType::Incompleteness,
            other => return Err(Error::InvalidSpec(format!("unknown hallucination type {other:?}"))),
        })
    }
}

/// A ground-truth question with its integer answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    /// `{domain}-{index}` within the domain corpus.
    pub id: String,
    pub domain: Domain,
    pub question_text: String,
    pub answer: i64,
    /// History: `region/timeframe`. Counting: the repeated word. Math: empty.
    pub group_key: String,
}

/// A rendered prompt/response pair with its labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrRecord {
    pub record_id: String,
    pub qa_ref: String,
    pub prompt_text: String,
    pub response_text: String,
    pub hall_type: HallType,
    pub level: u8,
    pub answer_offset: i64,
    pub conf_mod: String,
    /// Byte range `[start, end)` of the final answer digits in `response_text`.
    /// Empty when truncation removed the answer.
    pub answer_char_span: [usize; 2],
    pub perturbation_offset: Option<i64>,
    pub parent_id: Option<String>,
}

impl PrRecord {
    pub fn labels(&self) -> RecordLabels {
        RecordLabels {
            qa_ref: self.qa_ref.clone(),
            hall_type: self.hall_type,
            level: self.level,
            answer_offset: self.answer_offset,
            conf_mod: self.conf_mod.clone(),
            answer_char_span: self.answer_char_span,
            perturbation_offset: self.perturbation_offset,
            parent_id: self.parent_id.clone(),
        }
    }

    pub fn block(&self) -> Option<Block> {
        Block::from_record_id(&self.record_id)
    }

    pub fn has_answer(&self) -> bool {
        self.answer_char_span[0] < self.answer_char_span[1]
    }

    /// The answer digits as rendered, if the span is non-empty and parses.
    pub fn rendered_answer(&self) -> Option<i64> {
        let [start, end] = self.answer_char_span;
        self.response_text.get(start..end)?.parse().ok()
    }

    pub fn source_domain(&self) -> Option<Domain> {
        self.qa_ref.split('-').next()?.parse().ok()
    }
}

/// Label fields of a [`PrRecord`], carried alongside traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLabels {
    pub qa_ref: String,
    pub hall_type: HallType,
    pub level: u8,
    pub answer_offset: i64,
    pub conf_mod: String,
    pub answer_char_span: [usize; 2],
    pub perturbation_offset: Option<i64>,
    pub parent_id: Option<String>,
}

impl RecordLabels {
    pub fn source_domain(&self) -> Option<Domain> {
        self.qa_ref.split('-').next()?.parse().ok()
    }

    pub fn is_sibling(&self) -> bool {
        self.perturbation_offset.is_some()
    }
}

pub const MATH_OPERAND_RANGE: core::ops::Range<i64> = 40..60;
pub const COUNTING_WORDS: [&str; 8] = [
    "apple", "river", "stone", "cloud", "tiger", "piano", "candle", "garden",
];
pub const COUNTING_RANGE: core::ops::RangeInclusive<i64> = 3..=12;

pub fn math_question(a: i64, b: i64) -> String {
    format!("What is {a}\u{d7}{b}?")
}

/// Parses `What is a×b?` back into its operands.
pub(crate) fn math_operands(question: &str) -> Option<(i64, i64)> {
    let body = question.strip_prefix("What is ")?.strip_suffix('?')?;
    let (a, b) = body.split_once('\u{d7}')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

pub fn counting_question(word: &str, count: i64) -> String {
    let mut seq = String::new();
    for i in 0..count {
        if i > 0 {
            seq.push(' ');
        }
        seq.push_str(word);
    }
    format!("How many times does the word {word} appear in the sequence: {seq}?")
}

/// Generates the QA corpus for one domain.
///
/// Math and counting are exhaustive enumerations and history comes from the
/// bundled table, so the seed only matters for the shape of the contract:
/// the same seed always yields the same list in the same order.
pub fn generate_qa_corpus(domain: Domain, _seed: u64) -> Result<Vec<QaPair>> {
    match domain {
        Domain::Math => Ok(math_corpus()),
        Domain::Counting => Ok(counting_corpus()),
        Domain::History => Ok(HistoryTable::bundled()?.qa_pairs()),
    }
}

fn math_corpus() -> Vec<QaPair> {
    let mut out = Vec::with_capacity(400);
    for a in MATH_OPERAND_RANGE {
        for b in MATH_OPERAND_RANGE {
            out.push(QaPair {
                id: format!("math-{}", out.len()),
                domain: Domain::Math,
                question_text: math_question(a, b),
                answer: a * b,
                group_key: String::new(),
            });
        }
    }
    out
}

fn counting_corpus() -> Vec<QaPair> {
    let mut out = Vec::with_capacity(80);
    for word in COUNTING_WORDS {
        for c in COUNTING_RANGE {
            out.push(QaPair {
                id: format!("counting-{}", out.len()),
                domain: Domain::Counting,
                question_text: counting_question(word, c),
                answer: c,
                group_key: String::from(word),
            });
        }
    }
    out
}

/// All three domain corpora, needed together because cross-domain
/// irrelevance samples prompts from the other domains.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub math: Vec<QaPair>,
    pub history: Vec<QaPair>,
    pub counting: Vec<QaPair>,
}

impl Corpus {
    pub fn bundled(seed: u64) -> Result<Self> {
        Ok(Corpus {
            math: generate_qa_corpus(Domain::Math, seed)?,
            history: generate_qa_corpus(Domain::History, seed)?,
            counting: generate_qa_corpus(Domain::Counting, seed)?,
        })
    }

    pub fn with_history(table: &HistoryTable) -> Self {
        Corpus {
            math: math_corpus(),
            history: table.qa_pairs(),
            counting: counting_corpus(),
        }
    }

    pub fn domain(&self, domain: Domain) -> &[QaPair] {
        match domain {
            Domain::Math => &self.math,
            Domain::History => &self.history,
            Domain::Counting => &self.counting,
        }
    }

    pub fn find(&self, qa_ref: &str) -> Option<&QaPair> {
        let (domain, idx) = qa_ref.split_once('-')?;
        let domain: Domain = domain.parse().ok()?;
        let idx: usize = idx.parse().ok()?;
        self.domain(domain).get(idx).filter(|qa| qa.id == qa_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn math_corpus_covers_operand_square() {
        let qa = generate_qa_corpus(Domain::Math, 1).unwrap();
        assert_eq!(qa.len(), 400);
        let p = qa.iter().find(|q| q.question_text == "What is 46\u{d7}53?").unwrap();
        assert_eq!(p.answer, 2438);
        assert_eq!(math_operands(&p.question_text), Some((46, 53)));
    }

    #[test]
    fn counting_answers_match_sequences() {
        let qa = generate_qa_corpus(Domain::Counting, 7).unwrap();
        assert_eq!(qa.len(), 80);
        for q in &qa {
            assert!((3..=12).contains(&q.answer));
            let seq = q.question_text.rsplit(": ").next().unwrap().trim_end_matches('?');
            let n = seq.split(' ').filter(|w| *w == q.group_key).count() as i64;
            assert_eq!(n, q.answer, "{}", q.question_text);
        }
    }

    #[test]
    fn history_has_seventy_pairs() {
        for seed in [0, 1, 99] {
            assert_eq!(generate_qa_corpus(Domain::History, seed).unwrap().len(), 70);
        }
    }

    #[test]
    fn block_round_trips_through_record_id() {
        assert_eq!(Block::from_record_id("all-12-incoherence-3"), Some(Block::All));
        assert_eq!(Block::from_record_id("counting-0-baseline-0-p-5"), Some(Block::Counting));
        assert_eq!(Block::from_record_id("nope-1"), None);
    }

    #[test]
    fn corpus_lookup_by_ref() {
        let c = Corpus::bundled(0).unwrap();
        assert_eq!(c.find("math-133").unwrap().answer, 2438);
        assert!(c.find("math-400").is_none());
        assert!(c.find("bogus").is_none());
    }
}
