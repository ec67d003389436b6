//! Newline-delimited JSON files: datasets and prediction results.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Deserialize;

use intake_core::eval::{Dataset, DatasetError, LabeledScenario, PredictionResult};
use intake_core::{Label, ProgramId};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("file contains no records")]
    Empty,
}

impl SchemaError {
    pub fn line(&self) -> Option<usize> {
        match self {
            SchemaError::Line { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    scenario_id: String,
    jurisdiction: String,
    text: String,
    gold: String,
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_dataset(text: &str) -> Result<Dataset, SchemaError> {
    let mut records = Vec::new();
    let mut line_of = Vec::new();
    for (line, raw) in numbered_lines(text) {
        let r: RawScenario =
            serde_json::from_str(raw).map_err(|e| SchemaError::Line { line, reason: e.to_string() })?;
        let gold: Label = r.gold.parse().map_err(|e: intake_core::domain::UnknownLabel| SchemaError::Line {
            line,
            reason: e.to_string(),
        })?;
        records.push(LabeledScenario {
            scenario_id: r.scenario_id,
            jurisdiction: ProgramId::new(r.jurisdiction),
            text: r.text,
            gold,
        });
        line_of.push(line);
    }
    if records.is_empty() {
        return Err(SchemaError::Empty);
    }
    Dataset::new(records).map_err(|e| {
        let index = match &e {
            DatasetError::EmptyText { index } | DatasetError::DuplicatePair { index, .. } => *index,
        };
        SchemaError::Line { line: line_of[index], reason: e.to_string() }
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, SchemaError> {
    let text =
        fs::read_to_string(path).map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text)
}

pub fn parse_results(text: &str) -> Result<Vec<PredictionResult>, SchemaError> {
    let mut out = Vec::new();
    for (line, raw) in numbered_lines(text) {
        let r: PredictionResult =
            serde_json::from_str(raw).map_err(|e| SchemaError::Line { line, reason: e.to_string() })?;
        if !r.is_well_formed() {
            return Err(SchemaError::Line {
                line,
                reason: "exactly one of predicted and error must be set, parse_retries at most 1".into(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_results(path: &Path) -> Result<Vec<PredictionResult>, SchemaError> {
    let text =
        fs::read_to_string(path).map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
    parse_results(&text)
}

pub fn write_results(mut w: impl Write, results: &[PredictionResult]) -> io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
