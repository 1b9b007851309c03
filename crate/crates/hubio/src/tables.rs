use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use allocscore::Allocation;
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{check_header, csv_error, HubError, POPULATION_HEADER, TRUTH_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub location: String,
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub location: String,
    pub population: f64,
}

/// Reads `(line, record)` pairs after validating the header.
fn read_records<R: Read, T: DeserializeOwned>(input: R, header: &[&str]) -> Result<Vec<(u64, T)>, HubError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if !check_header(&headers, header)? {
        return Ok(Vec::new());
    }
    rdr.records()
        .map(|r| {
            let record = r.map_err(csv_error)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let rec = record.deserialize(Some(&headers)).map_err(|e| HubError::parse(line, e.to_string()))?;
            Ok((line, rec))
        })
        .collect()
}

fn open(path: &Path) -> Result<File, HubError> {
    File::open(path).map_err(|e| HubError::io(path, e))
}

/// Observed need keyed by `(location, date)`.
pub fn load_truth(path: impl AsRef<Path>) -> Result<BTreeMap<(String, NaiveDate), f64>, HubError> {
    read_truth(open(path.as_ref())?)
}

pub fn read_truth<R: Read>(input: R) -> Result<BTreeMap<(String, NaiveDate), f64>, HubError> {
    let mut out = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for (line, rec) in read_records::<_, TruthRecord>(input, &TRUTH_HEADER)? {
        if !(rec.value.is_finite() && rec.value >= 0.0) {
            return Err(HubError::parse(line, format!("truth value {} must be finite and nonnegative", rec.value)));
        }
        let key = (rec.location, rec.date);
        if let Some(first) = seen.insert(key.clone(), line) {
            return Err(HubError::DuplicateRow { line, first, key: format!("location {}, date {}", key.0, key.1) });
        }
        out.insert(key, rec.value);
    }
    Ok(out)
}

/// Population keyed by location.
pub fn load_population(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>, HubError> {
    read_population(open(path.as_ref())?)
}

pub fn read_population<R: Read>(input: R) -> Result<BTreeMap<String, f64>, HubError> {
    let mut out = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for (line, rec) in read_records::<_, PopulationRecord>(input, &POPULATION_HEADER)? {
        if !(rec.population.is_finite() && rec.population > 0.0) {
            return Err(HubError::parse(line, format!("population {} must be positive", rec.population)));
        }
        if let Some(first) = seen.insert(rec.location.clone(), line) {
            return Err(HubError::DuplicateRow { line, first, key: format!("location {}", rec.location) });
        }
        out.insert(rec.location, rec.population);
    }
    Ok(out)
}

/// Splits `constraint` across `locations` in proportion to population.
pub fn per_capita_allocation(
    population: &BTreeMap<String, f64>,
    locations: &[String],
    constraint: f64,
) -> Result<Allocation<f64>, HubError> {
    let pops = locations
        .iter()
        .map(|l| {
            population
                .get(l)
                .copied()
                .ok_or_else(|| HubError::MissingLocation { context: "population table".into(), location: l.clone() })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let total: f64 = pops.iter().sum();
    let amounts = pops.iter().map(|p| constraint * (p / total)).collect();
    Ok(Allocation::new(amounts, constraint)?)
}
