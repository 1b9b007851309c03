use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use allocscore::QuantileSet;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{check_header, csv_error, HubError, FORECAST_HEADER};

/// One row of a forecast file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub model: String,
    pub location: String,
    pub target_date: NaiveDate,
    pub quantile_level: f64,
    pub value: f64,
}

/// `(model, target_date)`.
pub type ForecastKey = (String, NaiveDate);

/// Forecasts grouped by model and target date, each holding one quantile
/// set per location.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastSet {
    groups: BTreeMap<ForecastKey, BTreeMap<String, QuantileSet<f64>>>,
    n_records: usize,
    rejected: usize,
}

struct Row {
    level: f64,
    value: f64,
    line: u64,
}

pub fn load_forecasts(path: impl AsRef<Path>) -> Result<ForecastSet, HubError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HubError::io(path, e))?;
    read_forecasts(file)
}

pub fn read_forecasts<R: Read>(input: R) -> Result<ForecastSet, HubError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if !check_header(&headers, &FORECAST_HEADER)? {
        return Ok(ForecastSet::default());
    }

    let mut buckets: BTreeMap<ForecastKey, BTreeMap<String, Vec<Row>>> = BTreeMap::new();
    let mut n_records = 0;
    for result in rdr.records() {
        let record = result.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let rec: ForecastRecord =
            record.deserialize(Some(&headers)).map_err(|e| HubError::parse(line, e.to_string()))?;
        if !(rec.quantile_level > 0.0 && rec.quantile_level < 1.0) {
            return Err(HubError::parse(line, format!("quantile_level {} outside (0, 1)", rec.quantile_level)));
        }
        if !rec.value.is_finite() {
            return Err(HubError::parse(line, "value must be finite"));
        }
        n_records += 1;
        buckets.entry((rec.model, rec.target_date)).or_default().entry(rec.location).or_default().push(Row {
            level: rec.quantile_level,
            value: rec.value,
            line,
        });
    }

    let mut groups = BTreeMap::new();
    for ((model, date), locations) in buckets {
        let mut sets = BTreeMap::new();
        for (location, mut rows) in locations {
            rows.sort_by(|a, b| a.level.total_cmp(&b.level).then(a.line.cmp(&b.line)));
            for w in rows.windows(2) {
                if w[0].level == w[1].level {
                    return Err(HubError::DuplicateRow {
                        line: w[1].line,
                        first: w[0].line,
                        key: format!("model {model}, location {location}, date {date}, level {}", w[0].level),
                    });
                }
                if w[1].value < w[0].value {
                    return Err(HubError::CrossedQuantiles { model: model.clone(), location, date: date.to_string() });
                }
            }
            let first_line = rows[0].line;
            let (levels, values) = rows.iter().map(|r| (r.level, r.value)).unzip();
            let set = QuantileSet::new(levels, values).map_err(|e| {
                HubError::parse(first_line, format!("model {model}, location {location}, date {date}: {e}"))
            })?;
            sets.insert(location, set);
        }
        groups.insert((model, date), sets);
    }
    Ok(ForecastSet { groups, n_records, rejected: 0 })
}

impl ForecastSet {
    pub fn groups(&self) -> &BTreeMap<ForecastKey, BTreeMap<String, QuantileSet<f64>>> {
        &self.groups
    }

    pub fn get(&self, model: &str, date: NaiveDate) -> Option<&BTreeMap<String, QuantileSet<f64>>> {
        self.groups.get(&(model.to_string(), date))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Records read from the source.
    pub fn n_records(&self) -> usize {
        self.n_records
    }

    /// Records dropped by filtering since loading.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Records still held in groups. Always `n_records() - rejected()`.
    pub fn records_in_groups(&self) -> usize {
        self.groups.values().flat_map(|g| g.values()).map(QuantileSet::len).sum()
    }

    pub fn models(&self) -> BTreeSet<String> {
        self.groups.keys().map(|(m, _)| m.clone()).collect()
    }

    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.groups.keys().map(|(_, d)| *d).collect()
    }

    /// Union of locations across all groups, sorted.
    pub fn locations(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.groups.values().flat_map(|g| g.keys()).collect();
        set.into_iter().cloned().collect()
    }

    fn drop_where(&mut self, mut drop: impl FnMut(&ForecastKey, &BTreeMap<String, QuantileSet<f64>>) -> bool) {
        let mut removed = 0;
        self.groups.retain(|k, g| {
            let d = drop(k, g);
            if d {
                removed += g.values().map(QuantileSet::len).sum::<usize>();
            }
            !d
        });
        self.rejected += removed;
    }

    /// Keeps only the listed models.
    pub fn retain_models(&mut self, models: &[String]) {
        let keep: BTreeSet<&String> = models.iter().collect();
        self.drop_where(|(m, _), _| !keep.contains(m));
    }

    /// Keeps only models with forecasts for at least `min_dates` target dates.
    pub fn retain_min_dates(&mut self, min_dates: usize) {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for (m, _) in self.groups.keys() {
            *counts.entry(m.clone()).or_default() += 1;
        }
        self.drop_where(|(m, _), _| counts[m] < min_dates);
    }

    /// Fails on the first group lacking any of `required`.
    pub fn require_locations(&self, required: &[String]) -> Result<(), HubError> {
        for ((model, date), g) in &self.groups {
            if let Some(missing) = required.iter().find(|l| !g.contains_key(*l)) {
                return Err(HubError::MissingLocation {
                    context: format!("model {model} on {date}"),
                    location: missing.clone(),
                });
            }
        }
        Ok(())
    }

    /// Drops groups lacking any of `required` and locations outside it.
    pub fn retain_complete(&mut self, required: &[String]) {
        self.drop_where(|_, g| required.iter().any(|l| !g.contains_key(l)));
        let keep: BTreeSet<&String> = required.iter().collect();
        let mut removed = 0;
        for g in self.groups.values_mut() {
            g.retain(|l, q| {
                let k = keep.contains(l);
                if !k {
                    removed += q.len();
                }
                k
            });
        }
        self.rejected += removed;
    }
}
