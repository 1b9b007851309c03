//! Hub-style CSV ingestion and report persistence.
//!
//! Three input schemas are understood, each with an exact header:
//!
//! | file        | header                                          |
//! |-------------|-------------------------------------------------|
//! | forecasts   | `model,location,target_date,quantile_level,value` |
//! | truth       | `location,date,value`                           |
//! | population  | `location,population`                           |
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`). Reports are written as CSV summaries
//! or as a JSON array carrying per-location detail. Floating-point output
//! uses shortest round-trip formatting, so reading a written file back
//! reproduces the original values exactly.

use std::path::PathBuf;

use thiserror::Error;

mod forecasts;
mod report;
mod tables;

pub use forecasts::{load_forecasts, read_forecasts, ForecastKey, ForecastRecord, ForecastSet};
pub use report::{
    read_report, read_rows, read_rows_from, write_report, write_report_to, write_rows, write_rows_to, Format,
    LocationRow, RankRow, Row, ScoreRecord, ScoreSummary,
};
pub use tables::{
    load_population, load_truth, per_capita_allocation, read_population, read_truth, PopulationRecord, TruthRecord,
};

pub const FORECAST_HEADER: [&str; 5] = ["model", "location", "target_date", "quantile_level", "value"];
pub const TRUTH_HEADER: [&str; 3] = ["location", "date", "value"];
pub const POPULATION_HEADER: [&str; 2] = ["location", "population"];

#[derive(Debug, Error)]
pub enum HubError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("crossed quantiles for model {model}, location {location}, date {date}")]
    CrossedQuantiles { model: String, location: String, date: String },
    #[error("line {line}: duplicate row for {key} (first seen on line {first})")]
    DuplicateRow { line: u64, first: u64, key: String },
    #[error("{context} has no entry for location {location}")]
    MissingLocation { context: String, location: String },
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Alloc(#[from] allocscore::AllocError),
}

impl HubError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HubError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        HubError::Parse { line, message: message.into() }
    }

    /// Whether the error came from malformed or inconsistent input data.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, HubError::Io { .. })
    }
}

/// Maps a `csv` error to a parse error carrying the offending line.
pub(crate) fn csv_error(err: csv::Error) -> HubError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => HubError::io("<csv>", e),
        csv::ErrorKind::Deserialize { err, .. } => HubError::parse(line, err.to_string()),
        other => HubError::parse(line, format!("{other:?}")),
    }
}

/// Checks a header row against an expected schema. An empty file has no
/// header and is accepted as zero records.
pub(crate) fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<bool, HubError> {
    if headers.is_empty() {
        return Ok(false);
    }
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(HubError::parse(1, format!("expected header `{}`, found `{}`", expected.join(","), got.join(","))));
    }
    Ok(true)
}
