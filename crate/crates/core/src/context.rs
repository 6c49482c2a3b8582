//! Deterministic rule-based assertion classifier.
//!
//! The engine detects trigger phrases from a [`Lexicon`], projects each
//! trigger over a bounded scope inside its sentence, and maps the set of
//! dimensions covering the concept to a single label by fixed precedence:
//! experiencer > historical > hypothetical > negation > uncertainty, with
//! `positive` as the default when nothing fires.
//!
//! Matching is case-insensitive over whitespace/punctuation-normalized
//! tokens. At any token position only the longest matching phrase fires.
//! Scopes never cross sentence boundaries and are capped at
//! [`SCOPE_CAP`] tokens per direction.

use std::collections::BTreeSet;
use std::ops::Range;

use crate::lexicon::{Dimension, Direction, Lexicon, Trigger};
use crate::types::{AnnotatedInstance, AssertionLabel};

/// Maximum scope length, in tokens, on each side of a trigger.
pub const SCOPE_CAP: usize = 10;

/// Token abbreviations whose trailing period does not end a sentence.
const ABBREVIATIONS: [&str; 12] =
    ["dr", "mr", "mrs", "ms", "jr", "sr", "prof", "st", "vs", "pt", "wt", "ht"];

/// A normalized token with its character offsets in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub lower: String,
    pub start: usize,
    pub end: usize,
}

fn is_token_char(ch: char) -> bool {
    ch.is_alphanumeric() || ch == '/' || ch == '-' || ch == '\''
}

/// Splits text into normalized tokens. Alphanumerics plus `/`, `-`, and
/// `'` form tokens (so `h/o` stays whole); everything else separates.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut token_start = 0usize;
    for (offset, ch) in text.chars().enumerate() {
        if is_token_char(ch) {
            if current.is_empty() {
                token_start = offset;
            }
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(Token { lower: std::mem::take(&mut current), start: token_start, end: offset });
        }
    }
    if !current.is_empty() {
        let end = text.chars().count();
        tokens.push(Token { lower: current, start: token_start, end });
    }
    tokens
}

/// Splits the token stream into sentences, returned as token index ranges
/// whose concatenation covers all tokens.
///
/// A boundary falls between consecutive tokens when the text separating
/// them contains `.`, `!`, `?`, or a newline, except that a period after a
/// known abbreviation (for example `Dr.`) is not a boundary.
pub fn split_sentences(text: &str, tokens: &[Token]) -> Vec<Range<usize>> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut sentence_start = 0usize;
    for i in 0..tokens.len() - 1 {
        let gap = &chars[tokens[i].end..tokens[i + 1].start];
        let breaks = gap.iter().any(|&ch| {
            ch == '!' || ch == '?' || ch == '\n' || (ch == '.' && !is_abbreviation(&tokens[i].lower))
        });
        if breaks {
            sentences.push(sentence_start..i + 1);
            sentence_start = i + 1;
        }
    }
    sentences.push(sentence_start..tokens.len());
    sentences
}

fn is_abbreviation(token: &str) -> bool {
    ABBREVIATIONS.contains(&token)
}

/// A trigger occurrence: which trigger and which tokens it occupies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerMatch {
    pub trigger: Trigger,
    pub tokens: Range<usize>,
}

/// Finds trigger occurrences inside one sentence. At each position all
/// matching phrases of the maximal length fire; shorter overlapping
/// candidates at the same position are suppressed.
pub fn find_matches(lexicon: &Lexicon, tokens: &[Token], sentence: &Range<usize>) -> Vec<TriggerMatch> {
    let mut matches = Vec::new();
    for position in sentence.clone() {
        let mut longest = 0usize;
        let mut at_position: Vec<&Trigger> = Vec::new();
        for trigger in &lexicon.triggers {
            let len = trigger.phrase.len();
            if position + len > sentence.end || len < longest {
                continue;
            }
            let matched = trigger
                .phrase
                .iter()
                .zip(&tokens[position..position + len])
                .all(|(phrase_tok, tok)| *phrase_tok == tok.lower);
            if !matched {
                continue;
            }
            if len > longest {
                longest = len;
                at_position.clear();
            }
            at_position.push(trigger);
        }
        for trigger in at_position {
            matches.push(TriggerMatch { trigger: trigger.clone(), tokens: position..position + longest });
        }
    }
    matches
}

/// Resolves the scope of a trigger occurrence within its sentence.
///
/// Forward scopes run from the token after the trigger to the sentence end
/// or the token before the nearest following terminator, whichever comes
/// first; backward scopes mirror this toward the sentence start;
/// bidirectional is the contiguous union of both (including the trigger
/// tokens). Each direction is capped at [`SCOPE_CAP`] tokens.
pub fn resolve_scope(
    trigger_tokens: &Range<usize>,
    direction: Direction,
    sentence: &Range<usize>,
    terminators: &[Range<usize>],
) -> Range<usize> {
    let forward_end = |from: usize| -> usize {
        let mut end = sentence.end.min(from + SCOPE_CAP);
        for t in terminators {
            if t.start >= from && t.start < end {
                end = t.start;
            }
        }
        end.max(from)
    };
    let backward_start = |to: usize| -> usize {
        let mut start = sentence.start.max(to.saturating_sub(SCOPE_CAP));
        for t in terminators {
            if t.end <= to && t.end > start {
                start = t.end;
            }
        }
        start.min(to)
    };
    match direction {
        Direction::Forward => trigger_tokens.end..forward_end(trigger_tokens.end),
        Direction::Backward => backward_start(trigger_tokens.start)..trigger_tokens.start,
        Direction::Bidirectional => {
            backward_start(trigger_tokens.start)..forward_end(trigger_tokens.end)
        }
    }
}

/// One scope trigger that fired, with its resolved scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiredTrigger {
    pub trigger: Trigger,
    pub scope: Range<usize>,
    pub covers_concept: bool,
}

/// Explainability record for one rule classification.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleTrace {
    pub fired: Vec<FiredTrigger>,
    pub final_dimensions: BTreeSet<Dimension>,
}

fn dimension_label(dimension: Dimension) -> AssertionLabel {
    match dimension {
        Dimension::Negation => AssertionLabel::Negated,
        Dimension::Uncertainty => AssertionLabel::Possible,
        Dimension::Hypothetical => AssertionLabel::Hypothetical,
        Dimension::Historical => AssertionLabel::Historical,
        Dimension::Experiencer => AssertionLabel::Family,
    }
}

const PRECEDENCE: [Dimension; 5] = [
    Dimension::Experiencer,
    Dimension::Historical,
    Dimension::Hypothetical,
    Dimension::Negation,
    Dimension::Uncertainty,
];

/// Classifies one instance with the rule engine. Always yields a label.
pub fn classify_rule(instance: &AnnotatedInstance, lexicon: &Lexicon) -> (AssertionLabel, RuleTrace) {
    let tokens = tokenize(&instance.text);
    let concept_tokens: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.start < instance.concept.end && t.end > instance.concept.start)
        .map(|(i, _)| i)
        .collect();
    let Some(&first_concept_token) = concept_tokens.first() else {
        return (AssertionLabel::Positive, RuleTrace::default());
    };

    let sentences = split_sentences(&instance.text, &tokens);
    let sentence = sentences
        .iter()
        .find(|s| s.contains(&first_concept_token))
        .cloned()
        .unwrap_or(0..tokens.len());

    let matches = find_matches(lexicon, &tokens, &sentence);
    let terminator_ranges: Vec<Range<usize>> = matches
        .iter()
        .filter(|m| m.trigger.is_termination)
        .map(|m| m.tokens.clone())
        .collect();

    let mut trace = RuleTrace::default();
    for m in matches.iter().filter(|m| !m.trigger.is_termination) {
        let scope = resolve_scope(&m.tokens, m.trigger.direction, &sentence, &terminator_ranges);
        let covers = concept_tokens.iter().any(|&i| scope.contains(&i));
        if covers {
            if let Some(dimension) = m.trigger.dimension {
                trace.final_dimensions.insert(dimension);
            }
        }
        trace.fired.push(FiredTrigger { trigger: m.trigger.clone(), scope, covers_concept: covers });
    }

    let label = PRECEDENCE
        .iter()
        .find(|d| trace.final_dimensions.contains(d))
        .map_or(AssertionLabel::Positive, |&d| dimension_label(d));
    (label, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ConceptSpan;

    fn instance(text: &str, surface: &str) -> AnnotatedInstance {
        let chars: Vec<char> = text.chars().collect();
        let surface_chars: Vec<char> = surface.chars().collect();
        let start = (0..=chars.len() - surface_chars.len())
            .find(|&i| chars[i..i + surface_chars.len()] == surface_chars[..])
            .expect("surface present in text");
        AnnotatedInstance {
            id: "t1".to_string(),
            text: text.to_string(),
            concept: ConceptSpan::new(text, start, start + surface_chars.len()).unwrap(),
            gold: None,
            dataset: "sleep".to_string(),
        }
    }

    #[test]
    fn tokenizer_keeps_slashes_and_strips_punctuation() {
        let tokens = tokenize("H/o snoring, apnea.");
        let words: Vec<&str> = tokens.iter().map(|t| t.lower.as_str()).collect();
        assert_eq!(words, vec!["h/o", "snoring", "apnea"]);
        assert_eq!(tokens[0].start, 0);
        assert_eq!(tokens[0].end, 3);
    }

    #[test]
    fn sentence_split_basics() {
        let text = "He denies snoring. Sleep is poor.";
        let tokens = tokenize(text);
        let sentences = split_sentences(text, &tokens);
        assert_eq!(sentences, vec![0..3, 3..6]);

        assert!(split_sentences("", &tokenize("")).is_empty());

        let text = "Dr. Smith noted apnea.";
        let tokens = tokenize(text);
        assert_eq!(split_sentences(text, &tokens).len(), 1);
    }

    #[test]
    fn newlines_split_sentences() {
        let text = "denies snoring\nsleeps well";
        let tokens = tokenize(text);
        assert_eq!(split_sentences(text, &tokens).len(), 2);
    }

    #[test]
    fn forward_scope_runs_to_sentence_end() {
        let text = "no snoring or apnea tonight";
        let tokens = tokenize(text);
        let sentence = 0..tokens.len();
        let scope = resolve_scope(&(0..1), Direction::Forward, &sentence, &[]);
        assert_eq!(scope, 1..5);
    }

    #[test]
    fn terminator_clips_forward_scope() {
        // "but" at token 2 closes the scope opened by "no".
        let terminator = 2..3;
        let scope =
            resolve_scope(&(0..1), Direction::Forward, &(0..5), std::slice::from_ref(&terminator));
        assert_eq!(scope, 1..2);
    }

    #[test]
    fn sentence_final_forward_scope_is_empty() {
        let scope = resolve_scope(&(4..5), Direction::Forward, &(0..5), &[]);
        assert!(scope.is_empty());
    }

    #[test]
    fn backward_scope_mirrors_forward() {
        let scope = resolve_scope(&(3..5), Direction::Backward, &(0..7), &[]);
        assert_eq!(scope, 0..3);
        let terminator = 1..2;
        let clipped = resolve_scope(
            &(3..5),
            Direction::Backward,
            &(0..7),
            std::slice::from_ref(&terminator),
        );
        assert_eq!(clipped, 2..3);
    }

    #[test]
    fn scope_cap_limits_both_directions() {
        let sentence = 0..30;
        let fwd = resolve_scope(&(0..1), Direction::Forward, &sentence, &[]);
        assert_eq!(fwd, 1..11);
        let bwd = resolve_scope(&(25..26), Direction::Backward, &sentence, &[]);
        assert_eq!(bwd, 15..25);
    }

    #[test]
    fn denies_negates_snoring() {
        let lexicon = Lexicon::default_embedded();
        let (label, trace) = classify_rule(&instance("Patient denies snoring.", "snoring"), &lexicon);
        assert_eq!(label, AssertionLabel::Negated);
        assert!(trace.final_dimensions.contains(&Dimension::Negation));
    }

    #[test]
    fn experiencer_outranks_historical() {
        let lexicon = Lexicon::default_embedded();
        let (label, trace) =
            classify_rule(&instance("Family history of sleep apnea.", "sleep apnea"), &lexicon);
        assert_eq!(label, AssertionLabel::Family);
        assert!(trace.final_dimensions.contains(&Dimension::Historical));
        assert!(trace.final_dimensions.contains(&Dimension::Experiencer));
    }

    #[test]
    fn no_trigger_defaults_to_positive() {
        let lexicon = Lexicon::default_embedded();
        let (label, trace) = classify_rule(&instance("Patient reports snoring.", "snoring"), &lexicon);
        assert_eq!(label, AssertionLabel::Positive);
        assert!(trace.final_dimensions.is_empty());
    }

    #[test]
    fn terminator_blocks_negation_of_later_concept() {
        let lexicon = Lexicon::default_embedded();
        let (label, _) = classify_rule(&instance("No snoring but sleeps well.", "snoring"), &lexicon);
        assert_eq!(label, AssertionLabel::Negated);
        let (label, _) =
            classify_rule(&instance("No fevers but snoring persists.", "snoring"), &lexicon);
        assert_eq!(label, AssertionLabel::Positive);
    }

    #[test]
    fn longest_match_suppresses_prefix_triggers() {
        let lexicon = Lexicon::default_embedded();
        let tokens = tokenize("no evidence of apnea");
        let matches = find_matches(&lexicon, &tokens, &(0..tokens.len()));
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].trigger.phrase_text(), "no evidence of");
    }

    #[test]
    fn scope_never_crosses_sentences() {
        let lexicon = Lexicon::default_embedded();
        let (label, _) = classify_rule(&instance("No fevers today. Snoring persists.", "Snoring"), &lexicon);
        assert_eq!(label, AssertionLabel::Positive);
    }

    #[test]
    fn backward_negation_handles_late_cue() {
        let lexicon = Lexicon::default_embedded();
        let (label, _) = classify_rule(
            &instance("The joint stiffness reported at intake is no longer present.", "joint stiffness"),
            &lexicon,
        );
        assert_eq!(label, AssertionLabel::Negated);
    }

    #[test]
    fn classification_is_deterministic() {
        let lexicon = Lexicon::default_embedded();
        let inst = instance("Possible apnea, rule out osa.", "apnea");
        let first = classify_rule(&inst, &lexicon);
        for _ in 0..5 {
            assert_eq!(classify_rule(&inst, &lexicon), first);
        }
    }
}
