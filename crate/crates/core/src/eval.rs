//! Confusion-matrix construction, per-class/micro/macro F1, and comparison
//! against the shipped published reference scores.
//!
//! Conventions: precision, recall, and F1 are 0 whenever their denominator
//! is 0 (never NaN), and macro-F1 averages only over labels with nonzero
//! gold support. With one single-label prediction per instance, micro-F1
//! equals accuracy, i.e. the diagonal sum over the total.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::types::{AssertionLabel, Prediction};

const REFERENCE_TABLE: &str = include_str!("../data/reference_scores.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction references unknown instance id {id:?}")]
    UnknownInstanceId { id: String },
    #[error("duplicate prediction for instance id {id:?}")]
    DuplicatePrediction { id: String },
    #[error("nothing to evaluate: no scored instances")]
    EmptyEvaluation,
    #[error("no reference cells for slice ({dataset}, {model}, {method})")]
    UnknownSlice { dataset: String, model: String, method: String },
    #[error("malformed reference table line {line}: {reason}")]
    MalformedReference { line: usize, reason: String },
}

/// 6x6 count table indexed `(gold ordinal, predicted ordinal)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; AssertionLabel::COUNT]; AssertionLabel::COUNT],
    n: u64,
}

impl ConfusionMatrix {
    pub fn new() -> ConfusionMatrix {
        ConfusionMatrix::default()
    }

    pub fn from_counts(counts: [[u64; 6]; 6]) -> ConfusionMatrix {
        let n = counts.iter().flatten().sum();
        ConfusionMatrix { counts, n }
    }

    pub fn record(&mut self, gold: AssertionLabel, predicted: AssertionLabel) {
        self.counts[gold.ordinal()][predicted.ordinal()] += 1;
        self.n += 1;
    }

    pub fn count(&self, gold: AssertionLabel, predicted: AssertionLabel) -> u64 {
        self.counts[gold.ordinal()][predicted.ordinal()]
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn trace(&self) -> u64 {
        (0..AssertionLabel::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn gold_support(&self, label: AssertionLabel) -> u64 {
        self.counts[label.ordinal()].iter().sum()
    }

    pub fn predicted_total(&self, label: AssertionLabel) -> u64 {
        (0..AssertionLabel::COUNT).map(|g| self.counts[g][label.ordinal()]).sum()
    }
}

/// Result of scoring predictions against a corpus: the matrix plus how
/// many predictions were skipped because their instance has no gold label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMatrix {
    pub matrix: ConfusionMatrix,
    pub skipped_missing_gold: usize,
}

/// Counts `(gold, predicted)` pairs. Every prediction must reference a
/// known instance, each instance at most once; predictions whose instance
/// lacks gold are skipped and counted.
pub fn build_confusion(predictions: &[Prediction], corpus: &Corpus) -> Result<ScoredMatrix, EvalError> {
    let by_id: HashMap<&str, &crate::types::AnnotatedInstance> =
        corpus.instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut matrix = ConfusionMatrix::new();
    let mut skipped = 0usize;
    for prediction in predictions {
        let instance = by_id
            .get(prediction.instance_id.as_str())
            .ok_or_else(|| EvalError::UnknownInstanceId { id: prediction.instance_id.clone() })?;
        if !seen.insert(prediction.instance_id.as_str()) {
            return Err(EvalError::DuplicatePrediction { id: prediction.instance_id.clone() });
        }
        match instance.gold {
            Some(gold) => matrix.record(gold, prediction.label),
            None => skipped += 1,
        }
    }
    Ok(ScoredMatrix { matrix, skipped_missing_gold: skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn safe_div(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

fn prf(tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
    let precision = safe_div(tp as f64, (tp + fp) as f64);
    let recall = safe_div(tp as f64, (tp + fn_) as f64);
    let f1 = safe_div(2.0 * precision * recall, precision + recall);
    ClassMetrics { precision, recall, f1 }
}

/// Per-label precision/recall/F1 for all six labels. Labels absent from
/// both gold and predictions get `(0, 0, 0)`.
pub fn per_class_f1(matrix: &ConfusionMatrix) -> BTreeMap<AssertionLabel, ClassMetrics> {
    AssertionLabel::ALL
        .iter()
        .map(|&label| {
            let tp = matrix.count(label, label);
            let fp = matrix.predicted_total(label) - tp;
            let fn_ = matrix.gold_support(label) - tp;
            (label, prf(tp, fp, fn_))
        })
        .collect()
}

/// Micro-averaged F1 from globally pooled true/false positives and false
/// negatives. With one prediction per instance this equals the diagonal
/// sum over the total.
pub fn micro_f1(matrix: &ConfusionMatrix) -> Result<f64, EvalError> {
    if matrix.total() == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for label in AssertionLabel::ALL {
        let diag = matrix.count(label, label);
        tp += diag;
        fp += matrix.predicted_total(label) - diag;
        fn_ += matrix.gold_support(label) - diag;
    }
    Ok(prf(tp, fp, fn_).f1)
}

/// Unweighted mean of per-class F1 over labels with nonzero gold support.
pub fn macro_f1(matrix: &ConfusionMatrix) -> f64 {
    let per_class = per_class_f1(matrix);
    let supported: Vec<f64> = AssertionLabel::ALL
        .iter()
        .filter(|&&label| matrix.gold_support(label) > 0)
        .map(|label| per_class[label].f1)
        .collect();
    if supported.is_empty() {
        0.0
    } else {
        supported.iter().sum::<f64>() / supported.len() as f64
    }
}

/// Full metric bundle for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: BTreeMap<AssertionLabel, ClassMetrics>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub support: BTreeMap<AssertionLabel, u64>,
    pub scored: u64,
}

impl MetricReport {
    pub fn from_matrix(matrix: &ConfusionMatrix) -> Result<MetricReport, EvalError> {
        Ok(MetricReport {
            per_class: per_class_f1(matrix),
            micro_f1: micro_f1(matrix)?,
            macro_f1: macro_f1(matrix),
            support: AssertionLabel::ALL.iter().map(|&l| (l, matrix.gold_support(l))).collect(),
            scored: matrix.total(),
        })
    }

    /// Aligned-column text table, one row per label plus summary lines.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>9} {:>9} {:>9} {:>9}\n",
            "label", "precision", "recall", "f1", "support"
        ));
        for label in AssertionLabel::ALL {
            let m = self.per_class[&label];
            out.push_str(&format!(
                "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>9}\n",
                label.name(),
                m.precision,
                m.recall,
                m.f1,
                self.support[&label]
            ));
        }
        out.push_str(&format!("{:<14} {:>9.4}\n", "micro-f1", self.micro_f1));
        out.push_str(&format!("{:<14} {:>9.4}\n", "macro-f1", self.macro_f1));
        out.push_str(&format!("{:<14} {:>9}\n", "scored", self.scored));
        out
    }
}

/// Published per-category reference scores, keyed by
/// `(dataset, model, method, label)`. Dash cells are `None`. Read-only.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    cells: HashMap<(String, String, String, AssertionLabel), Option<f64>>,
}

impl ReferenceTable {
    /// The reference table shipped inside the binary.
    pub fn embedded() -> ReferenceTable {
        ReferenceTable::parse(REFERENCE_TABLE).expect("embedded reference table is valid")
    }

    pub fn parse(content: &str) -> Result<ReferenceTable, EvalError> {
        let mut cells = HashMap::new();
        for (idx, raw) in content.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 5 {
                return Err(EvalError::MalformedReference {
                    line,
                    reason: format!("expected 5 columns, found {}", fields.len()),
                });
            }
            let label = fields[3]
                .parse::<AssertionLabel>()
                .map_err(|e| EvalError::MalformedReference { line, reason: e.to_string() })?;
            let value = match fields[4].trim() {
                "-" => None,
                raw_value => Some(raw_value.parse::<f64>().map_err(|_| {
                    EvalError::MalformedReference {
                        line,
                        reason: format!("bad f1 value {raw_value:?}"),
                    }
                })?),
            };
            cells.insert(
                (
                    fields[0].trim().to_lowercase(),
                    fields[1].trim().to_lowercase(),
                    fields[2].trim().to_lowercase(),
                    label,
                ),
                value,
            );
        }
        Ok(ReferenceTable { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// The published value for one cell: `Ok(None)` is a dash cell,
    /// `Err(UnknownSlice)` means the (dataset, model, method) slice does
    /// not exist at all.
    pub fn cell(
        &self,
        dataset: &str,
        model: &str,
        method: &str,
        label: AssertionLabel,
    ) -> Result<Option<f64>, EvalError> {
        let key =
            (dataset.to_lowercase(), model.to_lowercase(), method.to_lowercase(), label);
        match self.cells.get(&key) {
            Some(value) => Ok(*value),
            None => Err(EvalError::UnknownSlice {
                dataset: dataset.to_string(),
                model: model.to_string(),
                method: method.to_string(),
            }),
        }
    }

    pub fn has_slice(&self, dataset: &str, model: &str, method: &str) -> bool {
        let (d, m, me) = (dataset.to_lowercase(), model.to_lowercase(), method.to_lowercase());
        self.cells.keys().any(|(kd, km, kme, _)| *kd == d && *km == m && *kme == me)
    }
}

/// Side-by-side table of observed versus published per-label F1.
///
/// Published numbers are reference values for orientation, not targets;
/// dash cells render as `-`.
pub fn compare_report(
    report: &MetricReport,
    reference: &ReferenceTable,
    dataset: &str,
    model: &str,
    method: &str,
) -> Result<String, EvalError> {
    if !reference.has_slice(dataset, model, method) {
        return Err(EvalError::UnknownSlice {
            dataset: dataset.to_string(),
            model: model.to_string(),
            method: method.to_string(),
        });
    }
    let mut out = String::new();
    out.push_str(&format!("slice: dataset={dataset} model={model} method={method}\n"));
    out.push_str(&format!(
        "{:<14} {:>9} {:>12} {:>9}\n",
        "label", "observed", "published", "delta"
    ));
    for label in AssertionLabel::ALL {
        let observed = report.per_class[&label].f1;
        let published = reference.cell(dataset, model, method, label)?;
        let (published_str, delta_str) = match published {
            Some(value) => (format!("{value}"), format!("{:+.4}", observed - value)),
            None => ("-".to_string(), "-".to_string()),
        };
        out.push_str(&format!(
            "{:<14} {:>9.4} {:>12} {:>9}\n",
            label.name(),
            observed,
            published_str,
            delta_str
        ));
    }
    out.push_str("published column is reference data, not a target\n");
    Ok(out)
}
