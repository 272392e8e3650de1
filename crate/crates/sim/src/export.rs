use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::trial::ExperimentSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(SimError::UnknownName { what: "format", value: s.to_string() }),
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["task", "method", "trial", "iteration", "accuracy"];

#[derive(Debug, Serialize)]
struct Row<'a> {
    task: &'a str,
    method: &'a str,
    trial: usize,
    iteration: usize,
    accuracy: f64,
}

/// Long-format CSV: one row per (method, trial, iteration), iterations
/// counted from 1.
pub fn to_csv(summary: &ExperimentSummary) -> std::result::Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let task = summary.task.name();
    for m in &summary.methods {
        for (trial, t) in m.trials.iter().enumerate() {
            for (i, &accuracy) in t.trace.iter().enumerate() {
                w.serialize(Row { task, method: &m.method, trial, iteration: i + 1, accuracy })?;
            }
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json(summary: &ExperimentSummary) -> serde_json::Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(summary)?;
    b.push(b'\n');
    Ok(b)
}

pub fn export_results(summary: &ExperimentSummary, path: &Path, format: ExportFormat) -> Result<()> {
    let bytes = match format {
        ExportFormat::Csv => to_csv(summary).map_err(|source| SimError::Csv { path: path.to_path_buf(), source })?,
        ExportFormat::Json => to_json(summary).map_err(|source| SimError::Json { path: path.to_path_buf(), source })?,
    };
    fs::write(path, bytes).map_err(|source| SimError::Io { path: path.to_path_buf(), source })
}

pub fn read_json_summary(path: &Path) -> Result<ExperimentSummary> {
    let bytes = fs::read(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| SimError::Json { path: path.to_path_buf(), source })
}
