use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{math_operands, math_question, Block, Corpus, Domain, HallType, PrRecord, QaPair};
use crate::{Error, Result};

/// Where a record sits in a dataset: its block and QA index within the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordSlot {
    pub block: Block,
    pub qa_index: usize,
}

impl RecordSlot {
    pub fn record_id(&self, hall_type: HallType, level: u8) -> String {
        format!("{}-{}-{}-{}", self.block, self.qa_index, hall_type, level)
    }
}

/// Magnitude range of the answer offset for incorrectness.
pub fn incorrectness_offset_range(domain: Domain, level: u8) -> RangeInclusive<i64> {
    match (domain, level) {
        (Domain::Math, 1) => 1..=9,
        (Domain::Math, 2) => 10..=99,
        (Domain::Math, _) => 100..=999,
        (Domain::History, 1) => 1..=5,
        (Domain::History, 2) => 6..=20,
        (Domain::History, _) => 21..=50,
        (Domain::Counting, 1) => 1..=1,
        (Domain::Counting, 2) => 2..=2,
        (Domain::Counting, _) => 3..=3,
    }
}

/// Magnitude range for the wrong answers of incoherent repetitions.
///
/// The level-3 incorrectness range, except for counting where `±3` offers only
/// two values and level 3 needs three distinct wrong answers.
pub fn incoherence_offset_range(domain: Domain) -> RangeInclusive<i64> {
    match domain {
        Domain::Counting => 1..=3,
        d => incorrectness_offset_range(d, 3),
    }
}

pub fn confidence_modifier(level: u8) -> &'static str {
    match level {
        1 => "probably",
        2 => "maybe",
        _ => "not",
    }
}

/// Renders one response sentence and returns it with the byte span of the
/// answer digits.
pub fn response_sentence(response_question: &str, conf_mod: &str, value: i64) -> (String, [usize; 2]) {
    let mut s = format!("The answer to '{response_question}' is ");
    if !conf_mod.is_empty() {
        s.push_str(conf_mod);
        s.push(' ');
    }
    let start = s.len();
    s.push_str(&value.to_string());
    let end = s.len();
    s.push('.');
    (s, [start, end])
}

fn response_question(qa: &QaPair) -> String {
    match qa.domain {
        Domain::Math => qa.question_text.replace('\u{d7}', " \u{d7} "),
        _ => qa.question_text.clone(),
    }
}

fn signed_offset<R: Rng + ?Sized>(rng: &mut R, magnitude: RangeInclusive<i64>) -> i64 {
    let m = rng.random_range(magnitude);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Renders `qa` as a prompt/response record exhibiting `hall_type` at `level`.
///
/// `corpus` supplies candidate prompts for irrelevance. All randomness comes
/// from `rng`.
pub fn render_record<R: Rng + ?Sized>(
    qa: &QaPair,
    slot: RecordSlot,
    hall_type: HallType,
    level: u8,
    corpus: &Corpus,
    rng: &mut R,
) -> Result<PrRecord> {
    match (hall_type, level) {
        (HallType::Baseline, 0) => {}
        (HallType::Baseline, l) => {
            return Err(Error::InvalidSpec(format!("baseline requires level 0, got {l}")))
        }
        (_, 1..=3) => {}
        (t, l) => return Err(Error::InvalidSpec(format!("{t} requires level 1-3, got {l}"))),
    }

    let rq = response_question(qa);
    let mut prompt = qa.question_text.clone();
    let mut answer_offset = 0;
    let mut conf_mod = "";
    let (response, span) = match hall_type {
        HallType::Baseline => response_sentence(&rq, "", qa.answer),
        HallType::Incorrectness => {
            answer_offset = signed_offset(rng, incorrectness_offset_range(qa.domain, level));
            response_sentence(&rq, "", qa.answer + answer_offset)
        }
        HallType::Confidence => {
            conf_mod = confidence_modifier(level);
            response_sentence(&rq, conf_mod, qa.answer)
        }
        HallType::Irrelevance => {
            prompt = irrelevant_prompt(qa, level, corpus, rng)?;
            response_sentence(&rq, "", qa.answer)
        }
        HallType::Incoherence => incoherent_response(qa, &rq, level, rng),
        HallType::Incompleteness => {
            let (full, span) = response_sentence(&rq, "", qa.answer);
            truncate_response(&full, span, level)
        }
    };

    Ok(PrRecord {
        record_id: slot.record_id(hall_type, level),
        qa_ref: qa.id.clone(),
        prompt_text: prompt,
        response_text: response,
        hall_type,
        level,
        answer_offset,
        conf_mod: conf_mod.to_string(),
        answer_char_span: span,
        perturbation_offset: None,
        parent_id: None,
    })
}

fn incoherent_response<R: Rng + ?Sized>(
    qa: &QaPair,
    rq: &str,
    level: u8,
    rng: &mut R,
) -> (String, [usize; 2]) {
    let wrong = usize::from(level);
    let range = incoherence_offset_range(qa.domain);
    let mut offsets: Vec<i64> = Vec::with_capacity(wrong);
    while offsets.len() < wrong {
        let o = signed_offset(rng, range.clone());
        if !offsets.contains(&o) {
            offsets.push(o);
        }
    }
    let mut text = String::new();
    for o in offsets {
        let (s, _) = response_sentence(rq, "", qa.answer + o);
        text.push_str(&s);
        text.push(' ');
    }
    let base = text.len();
    let (last, [a, b]) = response_sentence(rq, "", qa.answer);
    text.push_str(&last);
    (text, [base + a, base + b])
}

/// Keeps the leading `(10 - level) / 10` of the characters. The span survives
/// only if every answer digit survives.
fn truncate_response(full: &str, span: [usize; 2], level: u8) -> (String, [usize; 2]) {
    let chars = full.chars().count();
    let keep = chars * (10 - usize::from(level)) / 10;
    let cut = full.char_indices().nth(keep).map_or(full.len(), |(i, _)| i);
    let text = String::from(&full[..cut]);
    let span = if span[1] <= cut { span } else { [cut, cut] };
    (text, span)
}

fn irrelevant_prompt<R: Rng + ?Sized>(
    qa: &QaPair,
    level: u8,
    corpus: &Corpus,
    rng: &mut R,
) -> Result<String> {
    let fail = |reason: &str| Error::Generation {
        qa: qa.id.clone(),
        reason: format!("irrelevance level {level}: {reason}"),
    };

    if level == 3 {
        let others: Vec<Domain> = Domain::ALL.into_iter().filter(|d| *d != qa.domain).collect();
        let pool: Vec<&QaPair> = others.iter().flat_map(|d| corpus.domain(*d)).collect();
        return pool
            .choose(rng)
            .map(|q| q.question_text.clone())
            .ok_or_else(|| fail("no questions in other domains"));
    }

    match qa.domain {
        Domain::Math => {
            let (a, b) = math_operands(&qa.question_text).ok_or_else(|| fail("unparsable math question"))?;
            let magnitude = if level == 1 { 1..=4 } else { 6..=19 };
            let delta = signed_offset(rng, magnitude);
            Ok(math_question(a, b + delta))
        }
        Domain::History => {
            let (region, timeframe) = qa
                .group_key
                .split_once('/')
                .ok_or_else(|| fail("history pair without region/timeframe"))?;
            let pool: Vec<&QaPair> = corpus
                .history
                .iter()
                .filter(|q| q.id != qa.id)
                .filter(|q| match q.group_key.split_once('/') {
                    Some((r, t)) if level == 1 => r == region && t == timeframe,
                    Some((r, t)) => r == region && t != timeframe,
                    None => false,
                })
                .collect();
            pool.choose(rng)
                .map(|q| q.question_text.clone())
                .ok_or_else(|| fail("no candidate history question"))
        }
        Domain::Counting => {
            let pool: Vec<&QaPair> = corpus
                .counting
                .iter()
                .filter(|q| q.group_key == qa.group_key && q.answer != qa.answer)
                .filter(|q| {
                    let gap = (q.answer - qa.answer).abs();
                    if level == 1 {
                        gap <= 3
                    } else {
                        gap > 3
                    }
                })
                .collect();
            pool.choose(rng)
                .map(|q| q.question_text.clone())
                .ok_or_else(|| fail("no candidate counting sequence"))
        }
    }
}
