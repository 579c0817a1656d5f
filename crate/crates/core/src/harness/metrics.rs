use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Step { step: usize, phase: Phase, lr: f64, loss: f64 },
    Validation { step: usize, val_accuracy: f64 },
}

pub fn metrics_jsonl(metrics: &[Metric]) -> Result<String> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_metrics(path: impl AsRef<Path>, metrics: &[Metric]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_jsonl(metrics)?).map_err(|e| Error::io(path, e))
}
