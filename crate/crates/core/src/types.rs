//! Label scheme, concept spans, annotated instances, predictions, and
//! reasoning traces shared by every other module.
//!
//! The label scheme is a closed six-value enumeration. There is no
//! `Conditional` value and parsing one is an error. All types here are
//! immutable after construction and safe to share across threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("unknown assertion label: {0:?}")]
    UnknownLabel(String),
    #[error("unknown dataset tag: {0:?} (expected \"i2b2\", \"sleep\", or \"all\")")]
    UnknownDataset(String),
    #[error("unknown engine name: {0:?} (expected rule, simple, cot, sc, or tot)")]
    UnknownEngine(String),
    #[error("concept span [{start}, {end}) out of bounds for text of {len} characters")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
}

/// One of the six assertion categories, in canonical ordinal order.
///
/// The ordinal order (`Positive` < `Negated` < `Possible` < `Hypothetical`
/// < `Historical` < `Family`) is load-bearing: it breaks ties in majority
/// voting and fixes row/column order in confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssertionLabel {
    Positive = 0,
    Negated = 1,
    Possible = 2,
    Hypothetical = 3,
    Historical = 4,
    Family = 5,
}

impl AssertionLabel {
    pub const COUNT: usize = 6;

    /// All six labels in canonical ordinal order.
    pub const ALL: [AssertionLabel; 6] = [
        AssertionLabel::Positive,
        AssertionLabel::Negated,
        AssertionLabel::Possible,
        AssertionLabel::Hypothetical,
        AssertionLabel::Historical,
        AssertionLabel::Family,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<AssertionLabel> {
        AssertionLabel::ALL.get(ordinal).copied()
    }

    /// Canonical display name, always lowercase.
    pub fn name(self) -> &'static str {
        match self {
            AssertionLabel::Positive => "positive",
            AssertionLabel::Negated => "negated",
            AssertionLabel::Possible => "possible",
            AssertionLabel::Hypothetical => "hypothetical",
            AssertionLabel::Historical => "historical",
            AssertionLabel::Family => "family",
        }
    }
}

impl fmt::Display for AssertionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AssertionLabel {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

/// Parses a label name case-insensitively after trimming whitespace.
///
/// `present` and `absent` are accepted as aliases for `positive` and
/// `negated`. Everything else, including `conditional`, is an error.
pub fn parse_label(text: &str) -> Result<AssertionLabel, TypeError> {
    let normalized = text.trim().to_ascii_lowercase();
    match normalized.as_str() {
        "positive" | "present" => Ok(AssertionLabel::Positive),
        "negated" | "absent" => Ok(AssertionLabel::Negated),
        "possible" => Ok(AssertionLabel::Possible),
        "hypothetical" => Ok(AssertionLabel::Hypothetical),
        "historical" => Ok(AssertionLabel::Historical),
        "family" => Ok(AssertionLabel::Family),
        _ => Err(TypeError::UnknownLabel(text.trim().to_string())),
    }
}

/// The labels annotated in a given dataset, in ordinal order.
///
/// The i2b2 assertion corpus has no `historical` annotations; the sleep
/// corpus (and the union tag `all`) carries all six.
pub fn label_set(dataset: &str) -> Result<&'static [AssertionLabel], TypeError> {
    const I2B2: [AssertionLabel; 5] = [
        AssertionLabel::Positive,
        AssertionLabel::Negated,
        AssertionLabel::Possible,
        AssertionLabel::Hypothetical,
        AssertionLabel::Family,
    ];
    match dataset {
        "i2b2" => Ok(&I2B2),
        "sleep" | "all" => Ok(&AssertionLabel::ALL),
        other => Err(TypeError::UnknownDataset(other.to_string())),
    }
}

/// Number of characters in `text` (not bytes).
pub fn char_count(text: &str) -> usize {
    text.chars().count()
}

/// Substring of `text` at character offsets `[start, end)`, or `None` when
/// the offsets fall outside the text.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let byte_at = |char_idx: usize| -> Option<usize> {
        if char_idx == 0 {
            return Some(0);
        }
        let mut count = 0;
        for (byte, _) in text.char_indices() {
            if count == char_idx {
                return Some(byte);
            }
            count += 1;
        }
        count += 1;
        if count - 1 == char_idx {
            Some(text.len())
        } else {
            None
        }
    };
    let byte_start = byte_at(start)?;
    let byte_end = byte_at(end)?;
    Some(&text[byte_start..byte_end])
}

/// A concept mention located by 0-based character offsets, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSpan {
    pub start: usize,
    pub end: usize,
    /// Exactly the substring of the note text at `[start, end)`.
    pub surface: String,
}

impl ConceptSpan {
    /// Builds a span against `text`, deriving the surface form.
    pub fn new(text: &str, start: usize, end: usize) -> Result<ConceptSpan, TypeError> {
        let len = char_count(text);
        if start >= end || end > len {
            return Err(TypeError::SpanOutOfBounds { start, end, len });
        }
        let surface = char_slice(text, start, end)
            .ok_or(TypeError::SpanOutOfBounds { start, end, len })?
            .to_string();
        Ok(ConceptSpan { start, end, surface })
    }
}

/// One clinical note excerpt with one concept span and an optional gold
/// label. The unit of prediction and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedInstance {
    pub id: String,
    pub text: String,
    pub concept: ConceptSpan,
    pub gold: Option<AssertionLabel>,
    pub dataset: String,
}

/// The closed set of prediction engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Rule,
    Simple,
    Cot,
    Sc,
    Tot,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Rule => "rule",
            EngineKind::Simple => "simple",
            EngineKind::Cot => "cot",
            EngineKind::Sc => "sc",
            EngineKind::Tot => "tot",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rule" => Ok(EngineKind::Rule),
            "simple" => Ok(EngineKind::Simple),
            "cot" => Ok(EngineKind::Cot),
            "sc" => Ok(EngineKind::Sc),
            "tot" => Ok(EngineKind::Tot),
            other => Err(TypeError::UnknownEngine(other.to_string())),
        }
    }
}

/// One prompt/completion exchange inside a reasoning trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub prompt: String,
    pub completion: String,
}

/// Ordered record of everything behind one prediction: the raw exchanges,
/// parsed votes (self-consistency), and path scores (tree search).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReasoningTrace {
    pub steps: Vec<TraceStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub votes: Option<Vec<AssertionLabel>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_scores: Option<Vec<f64>>,
}

/// A single engine's label for a single instance, with its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub label: AssertionLabel,
    pub engine: EngineKind,
    pub trace: ReasoningTrace,
}
