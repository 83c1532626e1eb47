//! Append-only JSONL metric streams: one record per collect, one per
//! evaluation pass.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Training diagnostics for one collect. `cat_loss` is present only for
/// variants that train the category head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectRecord {
    /// Environment steps consumed so far.
    pub step: u64,
    /// Mean return of episodes finished during this collect; carries the
    /// previous value forward when none finished.
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cat_loss: Option<f64>,
    pub entropy: f64,
}

/// One evaluation pass of one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub env: String,
    pub mean_return: f64,
    pub std_return: f64,
    pub episodes: usize,
}

/// Appends one record as a JSON line.
pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, record).map_err(|e| LabError::json(path, e))?;
    writeln!(w).map_err(|e| LabError::io(path, e))?;
    w.flush().map_err(|e| LabError::io(path, e))?;
    Ok(())
}

/// Reads a whole JSONL file into memory.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| LabError::json(path, e))?);
    }
    Ok(records)
}

/// Truncates a metric file so a run can be restarted cleanly.
pub fn truncate(path: &Path) -> Result<()> {
    if path.exists() {
        File::create(path).map_err(|e| LabError::io(path, e))?;
    }
    Ok(())
}
