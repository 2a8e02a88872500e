//! JSON evaluation reports.
//!
//! Every document the CLI prints has the shape
//!
//! ```text
//! { "config": {...}, "units_used": int, "train_error_pct": float|null,
//!   "test_error_pct": float|null, "per_class_errors": [int x 10],
//!   "wall_time_s": float, "model_sha256": hex }
//! ```
//!
//! plus optional extras (`trace`, `best_for_n`). [`validate_report`] checks a
//! parsed document against that shape; `report.schema.json` carries the same
//! rules as a JSON Schema.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use wfp_core::classifier::ConfusionMatrix;
use wfp_core::dataset::NUM_CLASSES;
use wfp_core::trainer::TrainTrace;

pub const REPORT_SCHEMA: &str = include_str!("../report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub command: String,
    pub n_max: Option<usize>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    /// Eval bank preset name.
    pub bank: String,
    pub train_bank: Option<String>,
    pub max_terms: Option<usize>,
    pub attract: bool,
    pub allow_negative: bool,
    pub update_top_k: Option<usize>,
    pub shuffle_seed: Option<u64>,
    pub train_samples: Option<usize>,
    pub test_samples: Option<usize>,
    /// Which split `per_class_errors` counts: "test" or "train".
    pub per_class_split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub online_error_pct: f64,
    pub units_added: usize,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub units_used: usize,
    pub train_error_pct: Option<f64>,
    pub test_error_pct: Option<f64>,
    pub per_class_errors: [u64; NUM_CLASSES],
    pub wall_time_s: f64,
    pub model_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<EpochTrace>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_for_n: Option<bool>,
}

pub fn epoch_traces(trace: &TrainTrace) -> Vec<EpochTrace> {
    trace
        .epochs
        .iter()
        .map(|e| EpochTrace {
            epoch: e.epoch,
            online_error_pct: 100.0 * e.train_error,
            units_added: e.units_added,
            updates: e.updates,
        })
        .collect()
}

pub fn pct(cm: &ConfusionMatrix) -> f64 {
    100.0 * cm.error_rate()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn expect(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn is_pct(v: &Value) -> bool {
    v.is_null() || v.as_f64().is_some_and(|x| (0.0..=100.0).contains(&x))
}

/// Checks one report document against the fixed schema.
pub fn validate_report(doc: &Value) -> Result<(), String> {
    let obj = doc.as_object().ok_or("report is not an object")?;
    for key in [
        "config",
        "units_used",
        "train_error_pct",
        "test_error_pct",
        "per_class_errors",
        "wall_time_s",
        "model_sha256",
    ] {
        expect(obj.contains_key(key), &format!("missing `{key}`"))?;
    }
    expect(obj["config"].is_object(), "`config` must be an object")?;
    expect(obj["units_used"].is_u64(), "`units_used` must be a non-negative integer")?;
    expect(is_pct(&obj["train_error_pct"]), "`train_error_pct` must be a percentage or null")?;
    expect(is_pct(&obj["test_error_pct"]), "`test_error_pct` must be a percentage or null")?;
    let pce = obj["per_class_errors"]
        .as_array()
        .ok_or("`per_class_errors` must be an array")?;
    expect(pce.len() == NUM_CLASSES, "`per_class_errors` must have 10 entries")?;
    expect(pce.iter().all(Value::is_u64), "`per_class_errors` entries must be integers")?;
    expect(
        obj["wall_time_s"].as_f64().is_some_and(|t| t >= 0.0),
        "`wall_time_s` must be a non-negative number",
    )?;
    let hash = obj["model_sha256"].as_str().ok_or("`model_sha256` must be a string")?;
    expect(
        hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)),
        "`model_sha256` must be 64 lowercase hex digits",
    )?;
    Ok(())
}
