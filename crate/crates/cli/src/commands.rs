use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use allocscore::{
    allocation_score, integrated_allocation_score, mc_propriety, mean_wis, posthoc_impropriety_demo,
    score_fixed_allocation, solve_allocation, standardized_ranks, Forecast, LossParams, Marginal, Outcome, Quantiles,
    SolverConfig, TailFamily, WeightKind, WeightSpec,
};
use allocscore_hubio::{
    load_forecasts, load_population, load_truth, per_capita_allocation, write_report_to, write_rows_to, ForecastSet,
    RankRow, Row, ScoreRecord,
};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{ForecastArgs, LabArgs, OutputArgs, SolverArgs, TruthArgs, WeightArg};
use crate::error::CliError;

/// Name of the population-proportional benchmark in reports and rank tables.
pub const PER_CAPITA: &str = "per-capita";

type Truth = BTreeMap<(String, NaiveDate), f64>;
type Group = BTreeMap<String, Quantiles>;

pub struct Inputs {
    pub forecasts: ForecastSet,
    pub locations: Vec<String>,
}

pub fn load_inputs(a: &ForecastArgs) -> Result<Inputs, CliError> {
    let mut set = load_forecasts(&a.forecasts)?;
    if let Some(models) = &a.models {
        set.retain_models(models);
    }
    if let Some(n) = a.min_weeks {
        set.retain_min_dates(n);
    }
    let locations = a.locations.clone().unwrap_or_else(|| set.locations());
    if !a.drop_incomplete {
        set.require_locations(&locations)?;
    }
    set.retain_complete(&locations);
    Ok(Inputs { forecasts: set, locations })
}

pub fn solver(a: &SolverArgs) -> Result<SolverConfig<f64>, CliError> {
    let cfg = SolverConfig { rel_tol: a.rel_tol, max_iter: a.max_iter, ..SolverConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn forecast_of(group: &Group, locations: &[String]) -> Result<Forecast, CliError> {
    let marginals = locations
        .iter()
        .map(|l| Marginal::from_quantiles(&group[l], TailFamily::Normal))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Forecast::new(locations.to_vec(), marginals)?)
}

fn outcome(truth: &Truth, locations: &[String], date: NaiveDate) -> Result<Outcome<f64>, CliError> {
    let values = locations
        .iter()
        .map(|l| {
            truth
                .get(&(l.clone(), date))
                .copied()
                .ok_or_else(|| CliError::Input(format!("no truth for location {l} on {date}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Outcome::new(values)?)
}

/// Runs `f` over `jobs` in parallel, keeping input order and reporting the
/// first failure in that order.
fn par_ordered<J: Sync, R: Send>(
    jobs: &[J],
    f: impl Fn(&J) -> Result<R, CliError> + Sync + Send,
) -> Result<Vec<R>, CliError> {
    jobs.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn k_grid(k_min: f64, k_max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(k_min > 0.0 && k_min <= k_max && step > 0.0 && k_max.is_finite()) {
        return Err(CliError::Input("K grid needs 0 < k_min <= k_max and a positive step".into()));
    }
    let n = ((k_max - k_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| k_min + step * i as f64).collect())
}

fn sink(out: &Option<std::path::PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_rows<R: Row>(rows: &[R], out: &OutputArgs) -> Result<(), CliError> {
    Ok(write_rows_to(rows, sink(&out.out)?, out.format)?)
}

fn emit_report(rows: &[ScoreRecord], out: &OutputArgs) -> Result<(), CliError> {
    Ok(write_report_to(rows, sink(&out.out)?, out.format)?)
}

struct Scoring {
    inputs: Inputs,
    truth: Truth,
    population: Option<BTreeMap<String, f64>>,
    groups: Vec<((String, NaiveDate), Group)>,
}

fn load_scoring(input: &ForecastArgs, t: &TruthArgs) -> Result<Scoring, CliError> {
    let inputs = load_inputs(input)?;
    let truth = load_truth(&t.truth)?;
    let population = t.population.as_ref().map(load_population).transpose()?;
    let groups = inputs.forecasts.groups().iter().map(|(k, g)| (k.clone(), g.clone())).collect();
    Ok(Scoring { inputs, truth, population, groups })
}

impl Scoring {
    fn dates(&self) -> Vec<NaiveDate> {
        self.inputs.forecasts.dates().into_iter().collect()
    }

    fn score_forecasts(
        &self,
        ks: &[f64],
        loss: LossParams<f64>,
        cfg: &SolverConfig<f64>,
    ) -> Result<Vec<ScoreRecord>, CliError> {
        let locs = &self.inputs.locations;
        let rows = par_ordered(&self.groups, |((model, date), g)| {
            let f = forecast_of(g, locs)?;
            let y = outcome(&self.truth, locs, *date)?;
            ks.iter()
                .map(|&k| Ok(ScoreRecord::from_report(model, *date, &allocation_score(&f, &y, k, loss, cfg)?)))
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        Ok(rows.into_iter().flatten().collect())
    }

    fn per_capita_score(
        &self,
        pop: &BTreeMap<String, f64>,
        date: NaiveDate,
        k: f64,
        loss: LossParams<f64>,
    ) -> Result<ScoreRecord, CliError> {
        let locs = &self.inputs.locations;
        let y = outcome(&self.truth, locs, date)?;
        let x = per_capita_allocation(pop, locs, k)?;
        Ok(ScoreRecord::from_report(PER_CAPITA, date, &score_fixed_allocation(locs, &x, &y, k, loss)?))
    }

    fn score_benchmark(&self, ks: &[f64], loss: LossParams<f64>) -> Result<Vec<ScoreRecord>, CliError> {
        let Some(pop) = &self.population else { return Ok(Vec::new()) };
        let mut rows = Vec::new();
        for date in self.dates() {
            for &k in ks {
                rows.push(self.per_capita_score(pop, date, k, loss)?);
            }
        }
        Ok(rows)
    }

    fn score_all(
        &self,
        ks: &[f64],
        loss: LossParams<f64>,
        cfg: &SolverConfig<f64>,
    ) -> Result<Vec<ScoreRecord>, CliError> {
        let mut rows = self.score_forecasts(ks, loss, cfg)?;
        rows.extend(self.score_benchmark(ks, loss)?);
        rows.sort_by(|a, b| (&a.model, a.target_date).cmp(&(&b.model, b.target_date)).then(a.k.total_cmp(&b.k)));
        Ok(rows)
    }

    fn wis_rows(&self) -> Result<Vec<WisRow>, CliError> {
        let locs = &self.inputs.locations;
        par_ordered(&self.groups, |((model, date), g)| {
            let sets: Vec<Quantiles> = locs.iter().map(|l| g[l].clone()).collect();
            let y = outcome(&self.truth, locs, *date)?;
            Ok(WisRow { model: model.clone(), target_date: *date, mwis: mean_wis(&sets, &y)? })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub model: String,
    pub target_date: NaiveDate,
    #[serde(rename = "K")]
    pub k: f64,
    pub location: String,
    pub allocated: f64,
    pub shared_level: Option<f64>,
}

impl Row for AllocationRow {
    const COLUMNS: &'static [&'static str] = &["model", "target_date", "K", "location", "allocated", "shared_level"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WisRow {
    pub model: String,
    pub target_date: NaiveDate,
    pub mwis: f64,
}

impl Row for WisRow {
    const COLUMNS: &'static [&'static str] = &["model", "target_date", "mwis"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IasRow {
    pub model: String,
    pub target_date: NaiveDate,
    pub ias: f64,
}

impl Row for IasRow {
    const COLUMNS: &'static [&'static str] = &["model", "target_date", "ias"];
}

pub fn allocate(input: &ForecastArgs, k: f64, s: &SolverArgs, out: &OutputArgs) -> Result<(), CliError> {
    let cfg = solver(s)?;
    let inputs = load_inputs(input)?;
    let locs = &inputs.locations;
    let groups: Vec<_> = inputs.forecasts.groups().iter().collect();
    let rows = par_ordered(&groups, |((model, date), g)| {
        let x = solve_allocation(&forecast_of(g, locs)?, k, &cfg)?;
        let level = x.shared_level().map(|l| l.value());
        Ok(locs
            .iter()
            .zip(x.amounts())
            .map(|(l, &a)| AllocationRow {
                model: model.clone(),
                target_date: *date,
                k,
                location: l.clone(),
                allocated: a,
                shared_level: level,
            })
            .collect::<Vec<_>>())
    })?;
    emit_rows(&rows.into_iter().flatten().collect::<Vec<_>>(), out)
}

/// Mean scores and mean standardized ranks per model across target dates.
pub fn rank_table(reports: &[ScoreRecord], wis: &[WisRow]) -> Vec<RankRow> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        score: f64,
        rank: f64,
        wis_n: usize,
        wis: f64,
        wis_rank: f64,
    }
    let mut per_date: BTreeMap<NaiveDate, Vec<(String, f64)>> = BTreeMap::new();
    for r in reports {
        per_date.entry(r.target_date).or_default().push((r.model.clone(), r.allocation_score));
    }
    let mut wis_per_date: BTreeMap<NaiveDate, Vec<(String, f64)>> = BTreeMap::new();
    for w in wis {
        wis_per_date.entry(w.target_date).or_default().push((w.model.clone(), w.mwis));
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for scores in per_date.values() {
        for e in standardized_ranks(scores).entries {
            let a = acc.entry(e.model).or_default();
            a.n += 1;
            a.score += e.score;
            a.rank += e.standardized_rank;
        }
    }
    for scores in wis_per_date.values() {
        for e in standardized_ranks(scores).entries {
            let a = acc.entry(e.model).or_default();
            a.wis_n += 1;
            a.wis += e.score;
            a.wis_rank += e.standardized_rank;
        }
    }
    let mut rows: Vec<RankRow> = acc
        .into_iter()
        .filter(|(_, a)| a.n > 0)
        .map(|(model, a)| {
            let n = a.n as f64;
            let wn = a.wis_n as f64;
            RankRow {
                model,
                n_dates: a.n,
                mean_allocation_score: a.score / n,
                mean_as_rank: a.rank / n,
                mean_wis: (a.wis_n > 0).then(|| a.wis / wn),
                mean_wis_rank: (a.wis_n > 0).then(|| a.wis_rank / wn),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.mean_allocation_score.total_cmp(&b.mean_allocation_score).then(a.model.cmp(&b.model)));
    rows
}

pub fn score(
    input: &ForecastArgs,
    t: &TruthArgs,
    k: f64,
    loss: f64,
    ranks: Option<&Path>,
    s: &SolverArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let cfg = solver(s)?;
    let loss = LossParams::new(loss)?;
    let scoring = load_scoring(input, t)?;
    let reports = scoring.score_all(&[k], loss, &cfg)?;
    if let Some(path) = ranks {
        let wis = scoring.wis_rows()?;
        let table = rank_table(&reports, &wis);
        let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        write_rows_to(&table, BufWriter::new(file), out.format)?;
    }
    emit_report(&reports, out)
}

pub fn sweep(
    input: &ForecastArgs,
    t: &TruthArgs,
    (k_min, k_max, k_step): (f64, f64, f64),
    loss: f64,
    s: &SolverArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let cfg = solver(s)?;
    let loss = LossParams::new(loss)?;
    let ks = k_grid(k_min, k_max, k_step)?;
    let scoring = load_scoring(input, t)?;
    // CSV output is long format: one summary row per (model, date, K).
    emit_report(&scoring.score_all(&ks, loss, &cfg)?, out)
}

#[allow(clippy::too_many_arguments)]
pub fn ias(
    input: &ForecastArgs,
    t: &TruthArgs,
    weight: WeightArg,
    (k_min, k_max, k_step): (f64, f64, f64),
    loss: f64,
    s: &SolverArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let cfg = solver(s)?;
    let loss = LossParams::new(loss)?;
    let kind = match weight {
        WeightArg::UniformDefault => WeightKind::Uniform { k_min, k_max },
        WeightArg::Kind(k) => k,
    };
    let w = WeightSpec::new(kind, k_step)?;
    let scoring = load_scoring(input, t)?;
    let locs = &scoring.inputs.locations;
    let mut rows = par_ordered(&scoring.groups, |((model, date), g)| {
        let f = forecast_of(g, locs)?;
        let y = outcome(&scoring.truth, locs, *date)?;
        Ok(IasRow {
            model: model.clone(),
            target_date: *date,
            ias: integrated_allocation_score(&f, &y, &w, loss, &cfg)?,
        })
    })?;
    if let Some(pop) = &scoring.population {
        for date in scoring.dates() {
            let mut acc = 0.0;
            for (k, wk) in w.grid() {
                acc += wk * scoring.per_capita_score(pop, date, k, loss)?.allocation_score;
            }
            rows.push(IasRow { model: PER_CAPITA.into(), target_date: date, ias: acc });
        }
    }
    rows.sort_by(|a, b| (&a.model, a.target_date).cmp(&(&b.model, b.target_date)));
    emit_rows(&rows, out)
}

pub fn wis(input: &ForecastArgs, t: &TruthArgs, out: &OutputArgs) -> Result<(), CliError> {
    let scoring = load_scoring(input, t)?;
    emit_rows(&scoring.wis_rows()?, out)
}

fn emit_json<S: Serialize>(value: &S, out: &Option<std::path::PathBuf>) -> Result<(), CliError> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
}

fn lab_forecast(marginals: &[Marginal]) -> Result<Forecast, CliError> {
    Ok(Forecast::unlabeled(marginals.to_vec())?)
}

pub fn lab_propriety(truth: &[Marginal], other: &[Marginal], a: &LabArgs) -> Result<(), CliError> {
    let cfg = solver(&a.solver)?;
    let (f, g) = (lab_forecast(truth)?, lab_forecast(other)?);
    let r = mc_propriety(&f, &g, a.k, a.n, a.seed, LossParams::new(a.loss)?, &cfg)?;
    emit_json(&r, &a.out)
}

pub fn lab_posthoc(truth: &[Marginal], a: &LabArgs) -> Result<(), CliError> {
    let cfg = solver(&a.solver)?;
    let r = posthoc_impropriety_demo(&lab_forecast(truth)?, a.k, a.n, a.seed, LossParams::new(a.loss)?, &cfg)?;
    emit_json(&r, &a.out)
}
