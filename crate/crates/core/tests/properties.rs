//! Property tests for the voting, metric, corpus, and scope invariants.

use proptest::prelude::*;

use assertctl_core::context::{classify_rule, find_matches, resolve_scope, split_sentences, tokenize};
use assertctl_core::corpus::{parse_corpus_str, serialize_corpus_string, Corpus};
use assertctl_core::eval::{micro_f1, per_class_f1, ConfusionMatrix};
use assertctl_core::lexicon::Lexicon;
use assertctl_core::strategies::aggregate_sc;
use assertctl_core::types::{AnnotatedInstance, AssertionLabel, ConceptSpan};

/// Reference majority vote: count every label by scanning the whole vote
/// list, then walk labels in ordinal order keeping the first strict
/// maximum.
fn majority_oracle(votes: &[AssertionLabel]) -> Option<AssertionLabel> {
    if votes.is_empty() {
        return None;
    }
    let mut winner: Option<(AssertionLabel, usize)> = None;
    for candidate in AssertionLabel::ALL {
        let count = votes.iter().filter(|v| **v == candidate).count();
        winner = match winner {
            Some((_, best)) if best >= count => winner,
            _ => Some((candidate, count)),
        };
    }
    winner.map(|(label, _)| label)
}

fn label_strategy() -> impl Strategy<Value = AssertionLabel> {
    (0usize..6).prop_map(|ordinal| AssertionLabel::from_ordinal(ordinal).unwrap())
}

proptest! {
    #[test]
    fn aggregate_matches_brute_force_oracle(votes in prop::collection::vec(label_strategy(), 1..=9)) {
        prop_assert_eq!(aggregate_sc(&votes), majority_oracle(&votes));
    }

    #[test]
    fn aggregate_is_permutation_invariant(
        votes in prop::collection::vec(label_strategy(), 1..=9),
        rotation in 0usize..9,
    ) {
        let mut rotated = votes.clone();
        rotated.rotate_left(rotation % votes.len());
        prop_assert_eq!(aggregate_sc(&votes), aggregate_sc(&rotated));
        let mut reversed = votes.clone();
        reversed.reverse();
        prop_assert_eq!(aggregate_sc(&votes), aggregate_sc(&reversed));
    }

    #[test]
    fn appending_the_winner_never_changes_the_winner(
        votes in prop::collection::vec(label_strategy(), 1..=9),
    ) {
        let winner = aggregate_sc(&votes).unwrap();
        let mut extended = votes.clone();
        extended.push(winner);
        prop_assert_eq!(aggregate_sc(&extended), Some(winner));
    }

    #[test]
    fn micro_f1_equals_accuracy_for_single_label_matrices(
        cells in prop::collection::vec(0u64..30, 36),
    ) {
        let mut counts = [[0u64; 6]; 6];
        for (i, value) in cells.iter().enumerate() {
            counts[i / 6][i % 6] = *value;
        }
        let matrix = ConfusionMatrix::from_counts(counts);
        prop_assume!(matrix.total() > 0);
        let micro = micro_f1(&matrix).unwrap();
        let accuracy = matrix.trace() as f64 / matrix.total() as f64;
        prop_assert!((micro - accuracy).abs() < 1e-12);
    }

    #[test]
    fn recall_depends_on_row_and_precision_on_column(
        cells in prop::collection::vec(1u64..20, 36),
        other in prop::collection::vec(1u64..20, 36),
    ) {
        let build = |values: &[u64]| {
            let mut counts = [[0u64; 6]; 6];
            for (i, v) in values.iter().enumerate() {
                counts[i / 6][i % 6] = *v;
            }
            counts
        };
        let label = AssertionLabel::Negated;
        let row = label.ordinal();

        // Same row, otherwise different matrices: identical recall.
        let mut a = build(&cells);
        let mut b = build(&other);
        b[row] = a[row];
        let recall_a = per_class_f1(&ConfusionMatrix::from_counts(a))[&label].recall;
        let recall_b = per_class_f1(&ConfusionMatrix::from_counts(b))[&label].recall;
        prop_assert_eq!(recall_a, recall_b);

        // Same column: identical precision.
        let mut c = build(&other);
        for gold in 0..6 {
            c[gold][row] = a[gold][row];
        }
        let precision_a = per_class_f1(&ConfusionMatrix::from_counts(a))[&label].precision;
        let precision_c = per_class_f1(&ConfusionMatrix::from_counts(c))[&label].precision;
        prop_assert_eq!(precision_a, precision_c);
        let _ = &mut a;
    }

    #[test]
    fn corpus_roundtrip_is_identity(
        seeds in prop::collection::vec(("[a-z0-9 .,]{2,40}", 0usize..40, 1usize..10, prop::option::of(0usize..6)), 0..12),
    ) {
        let mut instances = Vec::new();
        for (index, (text, start, span_len, gold)) in seeds.into_iter().enumerate() {
            let chars = text.chars().count();
            prop_assume!(chars >= 2);
            let start = start % (chars - 1);
            let end = (start + span_len).min(chars);
            let concept = match ConceptSpan::new(&text, start, end) {
                Ok(span) => span,
                Err(_) => continue,
            };
            instances.push(AnnotatedInstance {
                id: format!("r{index}"),
                text,
                concept,
                gold: gold.map(|g| AssertionLabel::from_ordinal(g).unwrap()),
                dataset: "sleep".to_string(),
            });
        }
        let corpus = Corpus::new(instances);
        let serialized = serialize_corpus_string(&corpus);
        let reparsed = parse_corpus_str(&serialized).unwrap();
        prop_assert_eq!(&reparsed, &corpus);
        prop_assert_eq!(serialize_corpus_string(&reparsed), serialized);
    }

    #[test]
    fn fired_scopes_stay_inside_their_sentence(
        words in prop::collection::vec(
            prop::sample::select(vec![
                "no", "denies", "without", "possible", "may", "history", "of",
                "if", "mother", "but", "however", "snoring", "apnea", "sleep",
                "patient", "reports", "study", "h/o", "rule", "out",
            ]),
            2..25,
        ),
        breaks in prop::collection::vec(any::<bool>(), 2..25),
    ) {
        // Assemble text with '.' sentence breaks sprinkled between words.
        let mut text = String::new();
        for (i, word) in words.iter().enumerate() {
            text.push_str(word);
            if breaks.get(i).copied().unwrap_or(false) && i + 1 < words.len() {
                text.push('.');
            }
            text.push(' ');
        }
        let text = text.trim_end().to_string();
        let tokens = tokenize(&text);
        prop_assume!(!tokens.is_empty());
        let sentences = split_sentences(&text, &tokens);

        // Concatenation of sentences covers every token exactly once.
        let mut covered = 0usize;
        for sentence in &sentences {
            prop_assert_eq!(sentence.start, covered);
            covered = sentence.end;
        }
        prop_assert_eq!(covered, tokens.len());

        let lexicon = Lexicon::default_embedded();
        for sentence in &sentences {
            let matches = find_matches(&lexicon, &tokens, sentence);
            let terminators: Vec<_> = matches
                .iter()
                .filter(|m| m.trigger.is_termination)
                .map(|m| m.tokens.clone())
                .collect();
            for m in matches.iter().filter(|m| !m.trigger.is_termination) {
                let scope = resolve_scope(&m.tokens, m.trigger.direction, sentence, &terminators);
                prop_assert!(scope.start >= sentence.start && scope.end <= sentence.end,
                    "scope {:?} escapes sentence {:?}", scope, sentence);
            }
        }
    }

    #[test]
    fn unreachable_triggers_never_change_the_label(
        concept_word in prop::sample::select(vec!["snoring", "apnea", "insomnia"]),
        prefix in prop::sample::select(vec![
            "No fevers today.", "Mother has diabetes.", "History of smoking.", "Rule out anemia.",
        ]),
    ) {
        let base_text = format!("Patient reports {concept_word} nightly.");
        let lexicon = Lexicon::default_embedded();
        let make = |text: &str| {
            let start = text.find(concept_word).unwrap();
            let start = text[..start].chars().count();
            AnnotatedInstance {
                id: "p".to_string(),
                text: text.to_string(),
                concept: ConceptSpan::new(text, start, start + concept_word.chars().count()).unwrap(),
                gold: None,
                dataset: "sleep".to_string(),
            }
        };
        let (base_label, _) = classify_rule(&make(&base_text), &lexicon);
        // A trigger-laden sentence before the concept's sentence is out of
        // every scope and must not flip the label.
        let (label, _) = classify_rule(&make(&format!("{prefix} {base_text}")), &lexicon);
        prop_assert_eq!(label, base_label);
    }
}
