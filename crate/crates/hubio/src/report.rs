use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use allocscore::ScoreReport;
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{check_header, csv_error, HubError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// A flat record with a fixed CSV column order.
pub trait Row: Serialize + DeserializeOwned {
    const COLUMNS: &'static [&'static str];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub location: String,
    pub allocated: f64,
    pub observed: f64,
    pub unmet: f64,
}

/// One scored `(model, target_date, K)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model: String,
    pub target_date: NaiveDate,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub raw_score: f64,
    pub oracle_loss: f64,
    pub allocation_score: f64,
    pub shared_level: Option<f64>,
    pub per_location: Vec<LocationRow>,
}

impl ScoreRecord {
    pub fn from_report(model: impl Into<String>, target_date: NaiveDate, report: &ScoreReport<f64>) -> Self {
        ScoreRecord {
            model: model.into(),
            target_date,
            k: report.constraint,
            l: report.per_unit_loss,
            raw_score: report.raw_score,
            oracle_loss: report.oracle_loss,
            allocation_score: report.allocation_score,
            shared_level: report.shared_level.map(|l| l.value()),
            per_location: report
                .per_location
                .iter()
                .map(|r| LocationRow {
                    location: r.location.clone(),
                    allocated: r.allocated,
                    observed: r.observed,
                    unmet: r.unmet,
                })
                .collect(),
        }
    }

    pub fn summary(&self) -> ScoreSummary {
        ScoreSummary {
            model: self.model.clone(),
            target_date: self.target_date,
            k: self.k,
            l: self.l,
            raw_score: self.raw_score,
            oracle_loss: self.oracle_loss,
            allocation_score: self.allocation_score,
            shared_level: self.shared_level,
        }
    }
}

/// The CSV form of a [`ScoreRecord`], without per-location detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub model: String,
    pub target_date: NaiveDate,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub raw_score: f64,
    pub oracle_loss: f64,
    pub allocation_score: f64,
    pub shared_level: Option<f64>,
}

impl Row for ScoreSummary {
    const COLUMNS: &'static [&'static str] =
        &["model", "target_date", "K", "L", "raw_score", "oracle_loss", "allocation_score", "shared_level"];
}

impl From<ScoreSummary> for ScoreRecord {
    fn from(s: ScoreSummary) -> Self {
        ScoreRecord {
            model: s.model,
            target_date: s.target_date,
            k: s.k,
            l: s.l,
            raw_score: s.raw_score,
            oracle_loss: s.oracle_loss,
            allocation_score: s.allocation_score,
            shared_level: s.shared_level,
            per_location: Vec::new(),
        }
    }
}

/// Per-model summary across target dates. Benchmarks without quantile
/// forecasts leave the WIS columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub model: String,
    pub n_dates: usize,
    pub mean_allocation_score: f64,
    pub mean_as_rank: f64,
    pub mean_wis: Option<f64>,
    pub mean_wis_rank: Option<f64>,
}

impl Row for RankRow {
    const COLUMNS: &'static [&'static str] =
        &["model", "n_dates", "mean_allocation_score", "mean_as_rank", "mean_wis", "mean_wis_rank"];
}

fn create(path: &Path) -> Result<BufWriter<File>, HubError> {
    File::create(path).map(BufWriter::new).map_err(|e| HubError::io(path, e))
}

/// Writes rows as CSV (header always present) or as a pretty JSON array.
pub fn write_rows_to<W: Write, R: Row>(rows: &[R], mut out: W, format: Format) -> Result<(), HubError> {
    let io = |e| HubError::io("<output>", e);
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
            w.write_record(R::COLUMNS).map_err(csv_error)?;
            for r in rows {
                w.serialize(r).map_err(csv_error)?;
            }
            w.flush().map_err(io)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn write_rows<R: Row>(rows: &[R], path: impl AsRef<Path>, format: Format) -> Result<(), HubError> {
    write_rows_to(rows, create(path.as_ref())?, format)
}

pub fn read_rows_from<R: Row, I: Read>(input: I, format: Format) -> Result<Vec<R>, HubError> {
    match format {
        Format::Csv => {
            let mut rdr = csv::Reader::from_reader(input);
            let headers = rdr.headers().map_err(csv_error)?.clone();
            if !check_header(&headers, R::COLUMNS)? {
                return Ok(Vec::new());
            }
            rdr.deserialize().map(|r| r.map_err(csv_error)).collect()
        }
        Format::Json => Ok(serde_json::from_reader(input)?),
    }
}

pub fn read_rows<R: Row>(path: impl AsRef<Path>, format: Format) -> Result<Vec<R>, HubError> {
    let path = path.as_ref();
    read_rows_from(File::open(path).map_err(|e| HubError::io(path, e))?, format)
}

/// Writes score reports. CSV carries one summary row per report; JSON adds
/// the per-location breakdown.
pub fn write_report_to<W: Write>(reports: &[ScoreRecord], out: W, format: Format) -> Result<(), HubError> {
    match format {
        Format::Csv => {
            let rows: Vec<ScoreSummary> = reports.iter().map(ScoreRecord::summary).collect();
            write_rows_to(&rows, out, format)
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, reports)?;
            out.write_all(b"\n").map_err(|e| HubError::io("<output>", e))?;
            out.flush().map_err(|e| HubError::io("<output>", e))
        }
    }
}

pub fn write_report(reports: &[ScoreRecord], path: impl AsRef<Path>, format: Format) -> Result<(), HubError> {
    write_report_to(reports, create(path.as_ref())?, format)
}

/// Reads reports written by [`write_report`]. Records read from CSV have an
/// empty `per_location`.
pub fn read_report(path: impl AsRef<Path>, format: Format) -> Result<Vec<ScoreRecord>, HubError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HubError::io(path, e))?;
    match format {
        Format::Csv => Ok(read_rows_from::<ScoreSummary, _>(file, format)?.into_iter().map(Into::into).collect()),
        Format::Json => Ok(serde_json::from_reader(file)?),
    }
}
