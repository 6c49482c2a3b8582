//! Native corpus format: one JSON record per line, UTF-8, with fields
//! exactly `{id, text, start, end, gold?, dataset}` in that key order.
//!
//! Character offsets (not line:token coordinates) are canonical here; the
//! i2b2 standoff converter in [`crate::i2b2`] produces them. Parsing and
//! serialization invert each other, and serialization is canonical: parsing
//! a file and re-serializing it yields the normalized byte-for-byte form.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    char_count, label_set, parse_label, AnnotatedInstance, AssertionLabel, ConceptSpan,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: span [{start}, {end}) out of bounds for text of {len} characters")]
    SpanOutOfBounds { line: usize, start: usize, end: usize, len: usize },
    #[error("line {line}: duplicate instance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("instance {id:?} has no gold label")]
    MissingGold { id: String },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// An ordered collection of instances sharing a dataset tag.
///
/// The tag is the common per-record tag when all records agree, `"all"`
/// otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub instances: Vec<AnnotatedInstance>,
    pub dataset: String,
}

impl Corpus {
    pub fn new(instances: Vec<AnnotatedInstance>) -> Corpus {
        let dataset = match instances.first() {
            Some(first) if instances.iter().all(|i| i.dataset == first.dataset) => {
                first.dataset.clone()
            }
            Some(_) => "all".to_string(),
            None => "all".to_string(),
        };
        Corpus { instances, dataset }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedInstance> {
        self.instances.iter().find(|i| i.id == id)
    }
}

/// Wire shape of one record. Field order here fixes the serialized key
/// order; unknown keys are rejected.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    text: String,
    start: usize,
    end: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    gold: Option<String>,
    dataset: String,
}

fn instance_from_record(record: Record, line: usize) -> Result<AnnotatedInstance, CorpusError> {
    if record.id.is_empty() {
        return Err(CorpusError::MalformedRecord { line, reason: "empty id".to_string() });
    }
    if record.text.is_empty() {
        return Err(CorpusError::MalformedRecord { line, reason: "empty text".to_string() });
    }
    let allowed = label_set(&record.dataset)
        .map_err(|e| CorpusError::MalformedRecord { line, reason: e.to_string() })?;
    let gold = match record.gold {
        Some(raw) => {
            let label = parse_label(&raw)
                .map_err(|e| CorpusError::MalformedRecord { line, reason: e.to_string() })?;
            if !allowed.contains(&label) {
                return Err(CorpusError::MalformedRecord {
                    line,
                    reason: format!(
                        "gold label {:?} not annotated in dataset {:?}",
                        label.name(),
                        record.dataset
                    ),
                });
            }
            Some(label)
        }
        None => None,
    };
    let concept = ConceptSpan::new(&record.text, record.start, record.end).map_err(|_| {
        CorpusError::SpanOutOfBounds {
            line,
            start: record.start,
            end: record.end,
            len: char_count(&record.text),
        }
    })?;
    Ok(AnnotatedInstance { id: record.id, text: record.text, concept, gold, dataset: record.dataset })
}

/// Parses a corpus from text, one record per non-empty line, preserving
/// file order and validating span invariants and id uniqueness.
pub fn parse_corpus_str(content: &str) -> Result<Corpus, CorpusError> {
    let mut instances: Vec<AnnotatedInstance> = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw)
            .map_err(|e| CorpusError::MalformedRecord { line, reason: e.to_string() })?;
        let instance = instance_from_record(record, line)?;
        if instances.iter().any(|existing| existing.id == instance.id) {
            return Err(CorpusError::DuplicateId { line, id: instance.id });
        }
        instances.push(instance);
    }
    Ok(Corpus::new(instances))
}

pub fn parse_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let content = fs::read_to_string(path)?;
    parse_corpus_str(&content)
}

/// Canonical serialized form: keys in schema order, `gold` omitted when
/// absent, one record per line with a trailing newline per record.
pub fn serialize_corpus_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for instance in &corpus.instances {
        let record = Record {
            id: instance.id.clone(),
            text: instance.text.clone(),
            start: instance.concept.start,
            end: instance.concept.end,
            gold: instance.gold.map(|g| g.name().to_string()),
            dataset: instance.dataset.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serialization is infallible"));
        out.push('\n');
    }
    out
}

pub fn serialize_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut file = fs::File::create(path)?;
    file.write_all(serialize_corpus_string(corpus).as_bytes())?;
    Ok(())
}

/// Per-label counts and percentages of the corpus total.
///
/// Rows appear in canonical ordinal order and only for labels that occur.
/// Percentages are rounded half-up to two decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    pub rows: Vec<DistributionRow>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionRow {
    pub label: AssertionLabel,
    pub count: usize,
    pub percent: f64,
}

impl DistributionTable {
    pub fn count_of(&self, label: AssertionLabel) -> usize {
        self.rows.iter().find(|r| r.label == label).map_or(0, |r| r.count)
    }

    /// Aligned text rendering, one row per label plus a total line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<14} {:>7} {:>8}\n", "label", "count", "percent"));
        for row in &self.rows {
            out.push_str(&format!("{:<14} {:>7} {:>8.2}\n", row.label.name(), row.count, row.percent));
        }
        out.push_str(&format!("{:<14} {:>7} {:>8.2}\n", "total", self.total, if self.total == 0 { 0.0 } else { 100.0 }));
        out
    }
}

fn round_half_up_2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Counts gold labels across the corpus. Every instance must carry a gold
/// label; the first one missing aborts with its id.
pub fn corpus_stats(corpus: &Corpus) -> Result<DistributionTable, CorpusError> {
    let mut counts = [0usize; AssertionLabel::COUNT];
    for instance in &corpus.instances {
        match instance.gold {
            Some(label) => counts[label.ordinal()] += 1,
            None => return Err(CorpusError::MissingGold { id: instance.id.clone() }),
        }
    }
    let total = corpus.len();
    let rows = AssertionLabel::ALL
        .iter()
        .filter(|label| counts[label.ordinal()] > 0)
        .map(|&label| {
            let count = counts[label.ordinal()];
            DistributionRow {
                label,
                count,
                percent: round_half_up_2(100.0 * count as f64 / total as f64),
            }
        })
        .collect();
    Ok(DistributionTable { rows, total })
}
