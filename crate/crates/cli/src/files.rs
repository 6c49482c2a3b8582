//! Prediction and trace files written by `predict` and read by
//! `evaluate`: one JSON record per line under a `#` fingerprint header so
//! reruns are auditable. Failed instances keep their slot as an error
//! record.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use assertctl_core::strategies::StrategyError;
use assertctl_core::types::{AssertionLabel, EngineKind, Prediction, ReasoningTrace};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub instance_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<AssertionLabel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub engine: Option<EngineKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    instance_id: String,
    #[serde(flatten)]
    trace: ReasoningTrace,
}

/// FNV-1a over the canonical run description; stable across runs with
/// identical configuration.
pub fn fingerprint(canonical: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

pub fn write_outputs(
    out_dir: &Path,
    fingerprint: &str,
    ids: &[String],
    results: &[Result<Prediction, StrategyError>],
) -> std::io::Result<(usize, usize)> {
    fs::create_dir_all(out_dir)?;
    let header = format!("# assertctl predict fingerprint={fingerprint}\n");
    let mut predictions = header.clone();
    let mut traces = header;
    let mut ok = 0usize;
    let mut failed = 0usize;
    for (id, result) in ids.iter().zip(results) {
        match result {
            Ok(prediction) => {
                ok += 1;
                let record = PredictionRecord {
                    instance_id: prediction.instance_id.clone(),
                    label: Some(prediction.label),
                    engine: Some(prediction.engine),
                    error: None,
                };
                predictions.push_str(&serde_json::to_string(&record).expect("record serializes"));
                predictions.push('\n');
                let trace = TraceRecord {
                    instance_id: prediction.instance_id.clone(),
                    trace: prediction.trace.clone(),
                };
                traces.push_str(&serde_json::to_string(&trace).expect("trace serializes"));
                traces.push('\n');
            }
            Err(error) => {
                failed += 1;
                let record = PredictionRecord {
                    instance_id: id.clone(),
                    label: None,
                    engine: None,
                    error: Some(error.to_string()),
                };
                predictions.push_str(&serde_json::to_string(&record).expect("record serializes"));
                predictions.push('\n');
            }
        }
    }
    fs::write(out_dir.join("predictions.jsonl"), predictions)?;
    fs::write(out_dir.join("traces.jsonl"), traces)?;
    Ok((ok, failed))
}

/// Reads a predictions file back into scoreable predictions plus the
/// number of error records skipped.
pub fn read_predictions(path: &Path) -> Result<(Vec<Prediction>, usize), String> {
    let content = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut predictions = Vec::new();
    let mut errors = 0usize;
    for (idx, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(raw)
            .map_err(|e| format!("predictions line {}: {e}", idx + 1))?;
        match (record.label, record.error) {
            (Some(label), None) => predictions.push(Prediction {
                instance_id: record.instance_id,
                label,
                engine: record.engine.unwrap_or(EngineKind::Rule),
                trace: ReasoningTrace::default(),
            }),
            (None, Some(_)) => errors += 1,
            _ => {
                return Err(format!(
                    "predictions line {}: need exactly one of label or error",
                    idx + 1
                ))
            }
        }
    }
    Ok((predictions, errors))
}
