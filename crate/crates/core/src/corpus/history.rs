use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use csv_core::{ReadRecordResult, ReaderBuilder};

use super::{Domain, QaPair};
use crate::{Error, Result};

/// Versioned table of famous events and their CE years.
pub const BUNDLED_HISTORY_CSV: &str = include_str!("../../data/history_v1.csv");

const VERSION_TAG: &str = "# geohall history table, version ";
const SUPPORTED_VERSION: u32 = 1;
const HEADER: [&str; 4] = ["region", "timeframe", "question", "year"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub region: String,
    pub timeframe: String,
    pub question: String,
    pub year: i64,
}

impl HistoryEntry {
    pub fn group_key(&self) -> String {
        format!("{}/{}", self.region, self.timeframe)
    }
}

#[derive(Debug, Clone)]
pub struct HistoryTable {
    entries: Vec<HistoryEntry>,
}

impl HistoryTable {
    pub fn bundled() -> Result<Self> {
        Self::parse(BUNDLED_HISTORY_CSV)
    }

    /// Parses and validates a history table.
    ///
    /// Irrelevance needs a second question in the same region/timeframe and a
    /// second timeframe in the same region, so every group must hold at least
    /// two questions and every region at least two timeframes.
    pub fn parse(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let version = first
            .strip_prefix(VERSION_TAG)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::HistoryTable(format!("missing version line, found {first:?}")))?;
        if version != SUPPORTED_VERSION {
            return Err(Error::HistoryTable(format!("unsupported version {version}")));
        }

        let rows = read_rows(text)?;
        let mut rows = rows.into_iter();
        match rows.next() {
            Some((_, header)) if header.iter().map(String::as_str).eq(HEADER) => {}
            Some((line, header)) => {
                return Err(Error::HistoryTable(format!("line {line}: bad header {header:?}")))
            }
            None => return Err(Error::HistoryTable("table is empty".to_string())),
        }

        let mut entries = Vec::new();
        for (line, fields) in rows {
            let [region, timeframe, question, year]: [String; 4] = fields
                .try_into()
                .map_err(|f: Vec<String>| {
                    Error::HistoryTable(format!("line {line}: expected 4 fields, got {}", f.len()))
                })?;
            let year: i64 = year
                .trim()
                .parse()
                .map_err(|_| Error::HistoryTable(format!("line {line}: bad year {year:?}")))?;
            if year <= 0 {
                return Err(Error::HistoryTable(format!("line {line}: year {year} is not CE")));
            }
            if region.is_empty() || timeframe.is_empty() || question.is_empty() {
                return Err(Error::HistoryTable(format!("line {line}: empty field")));
            }
            if region.contains('/') || timeframe.contains('/') {
                return Err(Error::HistoryTable(format!("line {line}: '/' in region or timeframe")));
            }
            entries.push(HistoryEntry {
                region,
                timeframe,
                question,
                year,
            });
        }
        if entries.is_empty() {
            return Err(Error::HistoryTable("table has no entries".to_string()));
        }

        let mut groups: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for e in &entries {
            *groups.entry((&e.region, &e.timeframe)).or_default() += 1;
        }
        let mut timeframes: BTreeMap<&str, usize> = BTreeMap::new();
        for ((region, timeframe), n) in &groups {
            if *n < 2 {
                return Err(Error::HistoryTable(format!(
                    "group {region}/{timeframe} has {n} question(s), need at least 2"
                )));
            }
            *timeframes.entry(region).or_default() += 1;
        }
        for (region, n) in timeframes {
            if n < 2 {
                return Err(Error::HistoryTable(format!(
                    "region {region} has {n} timeframe(s), need at least 2"
                )));
            }
        }

        Ok(HistoryTable { entries })
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn qa_pairs(&self) -> Vec<QaPair> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| QaPair {
                id: format!("history-{i}"),
                domain: Domain::History,
                question_text: e.question.clone(),
                answer: e.year,
                group_key: e.group_key(),
            })
            .collect()
    }
}

/// Splits CSV text into records, skipping `#` comment lines.
/// Returns `(line_number, fields)` pairs.
fn read_rows(text: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = ReaderBuilder::new().comment(Some(b'#')).build();
    let mut input = text.as_bytes();
    let mut out = alloc::vec![0u8; text.len().max(1)];
    let mut ends = [0usize; 16];
    let mut rows = Vec::new();
    loop {
        let (res, nin, nout, nend) = reader.read_record(input, &mut out, &mut ends);
        input = &input[nin..];
        match res {
            ReadRecordResult::InputEmpty => continue,
            ReadRecordResult::OutputFull | ReadRecordResult::OutputEndsFull => {
                return Err(Error::HistoryTable(format!(
                    "line {}: record too large",
                    reader.line()
                )))
            }
            ReadRecordResult::Record => {
                let mut fields = Vec::with_capacity(nend);
                let mut start = 0;
                for &end in &ends[..nend] {
                    let bytes = &out[start..end];
                    let field = core::str::from_utf8(bytes).map_err(|_| {
                        Error::HistoryTable(format!("line {}: invalid UTF-8", reader.line()))
                    })?;
                    fields.push(field.to_string());
                    start = end;
                }
                debug_assert_eq!(start, nout);
                rows.push((reader.line() as usize - 1, fields));
            }
            ReadRecordResult::End => break,
        }
    }
    Ok(rows)
}
