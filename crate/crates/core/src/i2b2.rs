//! i2b2-style standoff assertion parsing.
//!
//! Each standoff line has the form
//!
//! ```text
//! c="<surface>" L1:T1 L2:T2||t="problem"||a="<assertion>"
//! ```
//!
//! with 1-based line numbers and 0-based token offsets into the note text.
//! Tokens are maximal runs of non-whitespace characters. The converter
//! recovers character offsets, checks the recovered surface against the
//! quoted one (whitespace-collapsed, case-insensitive), and maps the i2b2
//! assertion vocabulary onto the six-label scheme. `conditional` lines are
//! not converted; they are returned in a skipped list instead.
//!
//! Concepts that cross a line break are rejected rather than guessed at.

use thiserror::Error;

use crate::types::{AnnotatedInstance, AssertionLabel, ConceptSpan};

#[derive(Debug, Error)]
pub enum StandoffError {
    #[error("standoff line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("standoff line {line}: coordinate {coord} out of range: {reason}")]
    CoordinateOutOfRange { line: usize, coord: String, reason: String },
    #[error("standoff line {line}: token mismatch: expected {expected:?}, recovered {recovered:?}")]
    TokenMismatch { line: usize, expected: String, recovered: String },
}

/// A standoff line that was understood but intentionally not converted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub assertion: String,
}

#[derive(Debug, Clone)]
pub struct Conversion {
    pub instances: Vec<AnnotatedInstance>,
    pub skipped: Vec<SkippedLine>,
}

/// Token positions for one line of the note: `(char_start, char_end)` in
/// whole-text character offsets.
fn line_token_spans(line_text: &str, line_char_start: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut token_start = None;
    let mut offset = line_char_start;
    for ch in line_text.chars() {
        if ch.is_whitespace() {
            if let Some(start) = token_start.take() {
                spans.push((start, offset));
            }
        } else if token_start.is_none() {
            token_start = Some(offset);
        }
        offset += 1;
    }
    if let Some(start) = token_start {
        spans.push((start, offset));
    }
    spans
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct ParsedLine {
    surface: String,
    start_line: usize,
    start_token: usize,
    end_line: usize,
    end_token: usize,
    assertion: String,
}

fn parse_standoff_line(raw: &str, line: usize) -> Result<ParsedLine, StandoffError> {
    let fail = |reason: &str| StandoffError::Parse { line, reason: reason.to_string() };

    let rest = raw.strip_prefix("c=\"").ok_or_else(|| fail("expected c=\" prefix"))?;
    let close = rest.find('"').ok_or_else(|| fail("unterminated concept string"))?;
    let surface = rest[..close].to_string();
    let rest = rest[close + 1..]
        .strip_prefix(' ')
        .ok_or_else(|| fail("expected space after concept string"))?;

    let (coords, tail) = rest
        .split_once("||t=\"problem\"||a=\"")
        .ok_or_else(|| fail("expected ||t=\"problem\"||a=\" separator"))?;
    let assertion = tail
        .strip_suffix('"')
        .ok_or_else(|| fail("unterminated assertion string"))?
        .to_string();

    let mut pairs = coords.split(' ').filter(|s| !s.is_empty());
    let first = pairs.next().ok_or_else(|| fail("missing start coordinate"))?;
    let second = pairs.next().ok_or_else(|| fail("missing end coordinate"))?;
    if pairs.next().is_some() {
        return Err(fail("trailing content after coordinates"));
    }
    let parse_pair = |pair: &str| -> Result<(usize, usize), StandoffError> {
        let (l, t) = pair
            .split_once(':')
            .ok_or_else(|| fail(&format!("coordinate {pair:?} is not line:token")))?;
        let l = l.parse::<usize>().map_err(|_| fail(&format!("bad line number {l:?}")))?;
        let t = t.parse::<usize>().map_err(|_| fail(&format!("bad token number {t:?}")))?;
        if l == 0 {
            return Err(fail("line numbers are 1-based"));
        }
        Ok((l, t))
    };
    let (start_line, start_token) = parse_pair(first)?;
    let (end_line, end_token) = parse_pair(second)?;

    Ok(ParsedLine { surface, start_line, start_token, end_line, end_token, assertion })
}

fn map_assertion(value: &str, line: usize) -> Result<Option<AssertionLabel>, StandoffError> {
    match value.to_ascii_lowercase().as_str() {
        "present" => Ok(Some(AssertionLabel::Positive)),
        "absent" => Ok(Some(AssertionLabel::Negated)),
        "possible" => Ok(Some(AssertionLabel::Possible)),
        "hypothetical" => Ok(Some(AssertionLabel::Hypothetical)),
        "associated_with_someone_else" => Ok(Some(AssertionLabel::Family)),
        "conditional" => Ok(None),
        other => Err(StandoffError::Parse {
            line,
            reason: format!("unknown assertion value {other:?}"),
        }),
    }
}

/// Converts standoff assertion lines against `text` into instances with
/// character-offset spans. Instance ids are `<id_prefix>-<line>`.
pub fn parse_i2b2_assertion(
    text: &str,
    assertion_lines: &[&str],
    id_prefix: &str,
) -> Result<Conversion, StandoffError> {
    // Precompute per-line token spans in whole-text character offsets.
    let mut token_spans: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut char_cursor = 0usize;
    for line_text in text.split('\n') {
        token_spans.push(line_token_spans(line_text, char_cursor));
        char_cursor += line_text.chars().count() + 1; // the split '\n'
    }

    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for (idx, raw) in assertion_lines.iter().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = parse_standoff_line(raw.trim_end_matches('\r'), line)?;
        let label = match map_assertion(&parsed.assertion, line)? {
            Some(label) => label,
            None => {
                skipped.push(SkippedLine { line, assertion: parsed.assertion });
                continue;
            }
        };

        if parsed.start_line != parsed.end_line {
            return Err(StandoffError::CoordinateOutOfRange {
                line,
                coord: format!("{}:{} {}:{}", parsed.start_line, parsed.start_token, parsed.end_line, parsed.end_token),
                reason: "concept crosses a line break".to_string(),
            });
        }
        let note_line = parsed.start_line - 1;
        let spans = token_spans.get(note_line).ok_or_else(|| StandoffError::CoordinateOutOfRange {
            line,
            coord: format!("{}:{}", parsed.start_line, parsed.start_token),
            reason: format!("note has only {} lines", token_spans.len()),
        })?;
        if parsed.end_token < parsed.start_token {
            return Err(StandoffError::CoordinateOutOfRange {
                line,
                coord: format!("{}:{} {}:{}", parsed.start_line, parsed.start_token, parsed.end_line, parsed.end_token),
                reason: "end token precedes start token".to_string(),
            });
        }
        let token_bounds = |t: usize| -> Result<(usize, usize), StandoffError> {
            spans.get(t).copied().ok_or_else(|| StandoffError::CoordinateOutOfRange {
                line,
                coord: format!("{}:{}", parsed.start_line, t),
                reason: format!("line {} has only {} tokens", parsed.start_line, spans.len()),
            })
        };
        let (start, _) = token_bounds(parsed.start_token)?;
        let (_, end) = token_bounds(parsed.end_token)?;

        let concept = ConceptSpan::new(text, start, end).map_err(|_| {
            StandoffError::CoordinateOutOfRange {
                line,
                coord: format!("{start}..{end}"),
                reason: "recovered span out of text bounds".to_string(),
            }
        })?;
        let recovered = collapse_whitespace(&concept.surface);
        let expected = collapse_whitespace(&parsed.surface);
        if !recovered.eq_ignore_ascii_case(&expected) {
            return Err(StandoffError::TokenMismatch { line, expected, recovered });
        }

        instances.push(AnnotatedInstance {
            id: format!("{id_prefix}-{line}"),
            text: text.to_string(),
            concept,
            gold: Some(label),
            dataset: "i2b2".to_string(),
        });
    }
    Ok(Conversion { instances, skipped })
}
