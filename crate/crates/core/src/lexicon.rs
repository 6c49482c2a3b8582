//! Trigger lexicon for the rule engine.
//!
//! Lexicon files are UTF-8, tab-separated, four columns:
//!
//! ```text
//! phrase<TAB>dimension<TAB>direction<TAB>is_termination
//! ```
//!
//! `dimension` is one of `negation`, `uncertainty`, `hypothetical`,
//! `historical`, `experiencer`, or `-` for termination rows (terminators
//! close scopes and carry no dimension effect). Lines starting with `#`
//! are ignored. A default lexicon seeded from the classic negation/context
//! trigger families is embedded in the binary.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.tsv");
const DEFAULT_LEXICON_VERSION: &str = "builtin-1";

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("lexicon line {line}: duplicate trigger {phrase:?} ({dimension}/{direction})")]
    DuplicateTrigger { line: usize, phrase: String, dimension: String, direction: String },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// The contextual property a trigger asserts over its scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Negation,
    Uncertainty,
    Hypothetical,
    Historical,
    Experiencer,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Negation,
        Dimension::Uncertainty,
        Dimension::Hypothetical,
        Dimension::Historical,
        Dimension::Experiencer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Negation => "negation",
            Dimension::Uncertainty => "uncertainty",
            Dimension::Hypothetical => "hypothetical",
            Dimension::Historical => "historical",
            Dimension::Experiencer => "experiencer",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negation" => Ok(Dimension::Negation),
            "uncertainty" => Ok(Dimension::Uncertainty),
            "hypothetical" => Ok(Dimension::Hypothetical),
            "historical" => Ok(Dimension::Historical),
            "experiencer" => Ok(Dimension::Experiencer),
            other => Err(format!("unknown dimension {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Bidirectional => "bidirectional",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            "bidirectional" => Ok(Direction::Bidirectional),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// One lexicon entry: a lowercase token sequence plus how it projects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigger {
    /// Lowercase tokens, matched against normalized note tokens.
    pub phrase: Vec<String>,
    /// `None` exactly for termination triggers.
    pub dimension: Option<Dimension>,
    pub direction: Direction,
    pub is_termination: bool,
}

impl Trigger {
    pub fn phrase_text(&self) -> String {
        self.phrase.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    pub triggers: Vec<Trigger>,
    pub version: String,
}

impl Lexicon {
    /// The embedded default lexicon. Panics only if the shipped data file
    /// is invalid, which the test suite rules out.
    pub fn default_embedded() -> Lexicon {
        parse_lexicon_str(DEFAULT_LEXICON, DEFAULT_LEXICON_VERSION)
            .expect("embedded default lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.triggers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }

    pub fn count_for(&self, dimension: Dimension) -> usize {
        self.triggers.iter().filter(|t| t.dimension == Some(dimension)).count()
    }

    pub fn termination_count(&self) -> usize {
        self.triggers.iter().filter(|t| t.is_termination).count()
    }
}

fn parse_line(raw: &str, line: usize) -> Result<Trigger, LexiconError> {
    let fail = |reason: String| LexiconError::MalformedLine { line, reason };

    let columns: Vec<&str> = raw.split('\t').collect();
    if columns.len() != 4 {
        return Err(fail(format!("expected 4 tab-separated columns, found {}", columns.len())));
    }
    let phrase: Vec<String> =
        columns[0].split_whitespace().map(|t| t.to_lowercase()).collect();
    if phrase.is_empty() {
        return Err(fail("empty phrase".to_string()));
    }
    let is_termination = match columns[3].trim() {
        "true" => true,
        "false" => false,
        other => return Err(fail(format!("is_termination must be true or false, found {other:?}"))),
    };
    let dimension = match columns[1].trim() {
        "-" if is_termination => None,
        "-" => return Err(fail("dimension \"-\" is only valid for termination rows".to_string())),
        name if is_termination => {
            return Err(fail(format!(
                "termination rows carry no dimension effect; use \"-\" instead of {name:?}"
            )))
        }
        name => Some(name.parse::<Dimension>().map_err(fail)?),
    };
    let direction = columns[2].trim().parse::<Direction>().map_err(fail)?;
    Ok(Trigger { phrase, dimension, direction, is_termination })
}

pub fn parse_lexicon_str(content: &str, version: &str) -> Result<Lexicon, LexiconError> {
    let mut triggers: Vec<Trigger> = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let trigger = parse_line(raw, line)?;
        if let Some(existing) = triggers.iter().find(|t| {
            t.phrase == trigger.phrase
                && t.dimension == trigger.dimension
                && t.direction == trigger.direction
        }) {
            return Err(LexiconError::DuplicateTrigger {
                line,
                phrase: existing.phrase_text(),
                dimension: existing.dimension.map_or("-".to_string(), |d| d.to_string()),
                direction: existing.direction.name().to_string(),
            });
        }
        triggers.push(trigger);
    }
    Ok(Lexicon { triggers, version: version.to_string() })
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, LexiconError> {
    let content = fs::read_to_string(path)?;
    let version = path.file_name().map_or_else(|| "file".to_string(), |n| n.to_string_lossy().to_string());
    parse_lexicon_str(&content, &version)
}
