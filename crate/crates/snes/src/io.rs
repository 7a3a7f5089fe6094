//! CSV formats: instances, decision traces, policy tables, round
//! diagnostics and benchmark output.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use snes_core::apinn::{Rollout, RoundDiagnostics, StateKey};
use snes_core::bench::{ClassSummary, InstanceResult};
use snes_core::{BatteryParams, Decision, ExogenousState, PolicyTable};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct InstanceRow {
    t: usize,
    #[serde(rename = "E")]
    e: i64,
    #[serde(rename = "D")]
    d: i64,
    #[serde(rename = "C")]
    c: i64,
    #[serde(rename = "P")]
    p: i64,
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    ensure_parent(path)?;
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_headers(r: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let found = r.headers().map_err(|e| Error::csv(path, e))?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            path,
            format!("expected header '{}', found '{}'", expected.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn row_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::csv(path, e),
        _ => Error::format(path, e.to_string()),
    }
}

pub fn write_instance(path: &Path, trajectory: &[ExogenousState]) -> Result<()> {
    let mut w = writer(path)?;
    for (i, s) in trajectory.iter().enumerate() {
        w.serialize(InstanceRow { t: i + 1, e: s.energy, d: s.demand, c: s.buy_price, p: s.sell_price })
            .map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

/// Reads `t,E,D,C,P` rows; `t` must run `1..=T` in order.
pub fn read_instance(path: &Path) -> Result<Vec<ExogenousState>> {
    let mut r = reader(path)?;
    check_headers(&mut r, path, &["t", "E", "D", "C", "P"])?;
    let mut out = Vec::new();
    for row in r.deserialize::<InstanceRow>() {
        let row = row.map_err(|e| row_error(path, e))?;
        if row.t != out.len() + 1 {
            return Err(Error::format(path, format!("period {} out of order, expected {}", row.t, out.len() + 1)));
        }
        if row.e < 0 || row.d < 0 {
            return Err(Error::format(path, format!("period {}: negative energy or demand", row.t)));
        }
        if row.p > row.c {
            return Err(Error::format(
                path,
                format!("period {}: selling price {} above buying price {}", row.t, row.p, row.c),
            ));
        }
        out.push(ExogenousState::new(row.e, row.d, row.c, row.p));
    }
    if out.is_empty() {
        return Err(Error::format(path, "no periods"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub prior: i64,
    #[serde(rename = "E")]
    pub e: i64,
    #[serde(rename = "D")]
    pub d: i64,
    #[serde(rename = "C")]
    pub c: i64,
    #[serde(rename = "P")]
    pub p: i64,
    pub xb: i64,
    pub xs: i64,
    pub xr: i64,
    pub profit: f64,
}

/// One row per period of a rollout or an oracle path.
pub fn trace_rows(
    trajectory: &[ExogenousState],
    initial: i64,
    decisions: &[Decision],
    profits: &[f64],
) -> Vec<TraceRow> {
    let mut prior = initial;
    trajectory
        .iter()
        .zip(decisions)
        .zip(profits)
        .enumerate()
        .map(|(i, ((w, d), &profit))| {
            let row = TraceRow {
                t: i + 1,
                prior,
                e: w.energy,
                d: w.demand,
                c: w.buy_price,
                p: w.sell_price,
                xb: d.buy,
                xs: d.sell,
                xr: d.store,
                profit,
            };
            prior = d.store;
            row
        })
        .collect()
}

pub fn rollout_rows(trajectory: &[ExogenousState], initial: i64, rollout: &Rollout) -> Vec<TraceRow> {
    trace_rows(trajectory, initial, &rollout.decisions, &rollout.profits)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = reader(path)?;
    check_headers(&mut r, path, &["t", "prior", "E", "D", "C", "P", "xb", "xs", "xr", "profit"])?;
    r.deserialize().map(|row| row.map_err(|e| row_error(path, e))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PolicyRow {
    t: usize,
    prior: i64,
    #[serde(rename = "E")]
    e: i64,
    #[serde(rename = "D")]
    d: i64,
    #[serde(rename = "C")]
    c: i64,
    #[serde(rename = "P")]
    p: i64,
    xb: i64,
    xs: i64,
    xr: i64,
}

pub fn write_policy(path: &Path, policy: &PolicyTable) -> Result<()> {
    let mut w = writer(path)?;
    for (k, d) in policy.iter() {
        let row = PolicyRow {
            t: k.t,
            prior: k.prior,
            e: k.w.energy,
            d: k.w.demand,
            c: k.w.buy_price,
            p: k.w.sell_price,
            xb: d.buy,
            xs: d.sell,
            xr: d.store,
        };
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

/// Loads a policy table, checking every entry for feasibility. The result
/// carries no value model and has generation 0.
pub fn read_policy(path: &Path, params: &BatteryParams, horizon: usize) -> Result<PolicyTable> {
    let mut r = reader(path)?;
    check_headers(&mut r, path, &["t", "prior", "E", "D", "C", "P", "xb", "xs", "xr"])?;
    let mut table = PolicyTable::naive();
    for row in r.deserialize::<PolicyRow>() {
        let row = row.map_err(|e| row_error(path, e))?;
        let key = StateKey { t: row.t, prior: row.prior, w: ExogenousState::new(row.e, row.d, row.c, row.p) };
        table
            .insert(key, Decision::new(row.xs, row.xb, row.xr), params, horizon)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub class: String,
    pub scenario: String,
    pub arch: String,
    pub seed: u64,
    pub round: usize,
    pub dataset_size: usize,
    pub training_loss: f64,
    pub validation_loss: f64,
    pub test_loss: f64,
    pub mean_revenue: f64,
    pub fallbacks: usize,
    pub table_size: usize,
}

impl DiagnosticsRow {
    pub fn new(class: &str, scenario: &str, arch: &str, seed: u64, d: &RoundDiagnostics) -> Self {
        DiagnosticsRow {
            class: class.into(),
            scenario: scenario.into(),
            arch: arch.into(),
            seed,
            round: d.round,
            dataset_size: d.dataset_size,
            training_loss: d.training_loss,
            validation_loss: d.validation_loss,
            test_loss: d.test_loss,
            mean_revenue: d.mean_revenue,
            fallbacks: d.fallbacks,
            table_size: d.table_size,
        }
    }
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_diagnostics(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    ensure_parent(path)?;
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let mut r = reader(path)?;
    r.deserialize().map(|row| row.map_err(|e| row_error(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub class: String,
    pub scenario: String,
    pub arch: String,
    pub instance: usize,
    pub policy_revenue: f64,
    pub oracle_revenue: f64,
    /// Empty when the oracle revenue is not positive.
    pub pct_optimal: Option<f64>,
}

impl InstanceRecord {
    pub fn new(class: &str, scenario: &str, arch: &str, r: &InstanceResult) -> Self {
        InstanceRecord {
            class: class.into(),
            scenario: scenario.into(),
            arch: arch.into(),
            instance: r.instance,
            policy_revenue: r.policy_revenue,
            oracle_revenue: r.oracle_revenue,
            pct_optimal: r.pct_optimal,
        }
    }
}

pub fn write_instance_results(path: &Path, rows: &[InstanceRecord]) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

pub fn read_instance_results(path: &Path) -> Result<Vec<InstanceRecord>> {
    let mut r = reader(path)?;
    r.deserialize().map(|row| row.map_err(|e| row_error(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub class: String,
    pub scenario: String,
    pub arch: String,
    pub n_included: usize,
    pub n_excluded: usize,
    pub mean_pct_optimal: f64,
    pub prop_gt_80: f64,
}

impl From<&ClassSummary> for SummaryRow {
    fn from(s: &ClassSummary) -> Self {
        SummaryRow {
            class: s.class.to_string(),
            scenario: s.scenario.name().into(),
            arch: s.approach.name().into(),
            n_included: s.stats.n_included,
            n_excluded: s.stats.n_excluded,
            mean_pct_optimal: s.stats.mean_pct_optimal,
            prop_gt_80: s.stats.prop_above,
        }
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = reader(path)?;
    check_headers(
        &mut r,
        path,
        &["class", "scenario", "arch", "n_included", "n_excluded", "mean_pct_optimal", "prop_gt_80"],
    )?;
    r.deserialize().map(|row| row.map_err(|e| row_error(path, e))).collect()
}

/// Which summary column a plot series carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Mean percent of the hindsight optimum.
    MeanPctOptimal,
    /// Share of instances above the threshold.
    PropAbove,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::MeanPctOptimal => "mean_pct_optimal",
            Figure::PropAbove => "prop_gt_80",
        }
    }

    fn value(self, row: &SummaryRow) -> f64 {
        match self {
            Figure::MeanPctOptimal => row.mean_pct_optimal,
            Figure::PropAbove => row.prop_gt_80,
        }
    }
}

/// Wide layout: one line per `(figure, scenario, class)` and one column
/// per approach, in first-seen order. Missing cells are left empty.
pub fn plot_table(rows: &[SummaryRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut approaches: Vec<&str> = Vec::new();
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !approaches.contains(&r.arch.as_str()) {
            approaches.push(&r.arch);
        }
        if !groups.contains(&(r.scenario.as_str(), r.class.as_str())) {
            groups.push((&r.scenario, &r.class));
        }
    }
    let mut header: Vec<String> = ["figure", "scenario", "class"].map(String::from).to_vec();
    header.extend(approaches.iter().map(|a| a.to_string()));
    let mut lines = Vec::new();
    for fig in [Figure::MeanPctOptimal, Figure::PropAbove] {
        for &(scenario, class) in &groups {
            let mut line = vec![fig.name().to_string(), scenario.to_string(), class.to_string()];
            for a in &approaches {
                let cell = rows
                    .iter()
                    .find(|r| r.scenario == scenario && r.class == class && r.arch == *a)
                    .map(|r| fig.value(r).to_string())
                    .unwrap_or_default();
                line.push(cell);
            }
            lines.push(line);
        }
    }
    (header, lines)
}

pub fn write_plotdata(out: &mut dyn Write, rows: &[SummaryRow]) -> Result<()> {
    let (header, lines) = plot_table(rows);
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::csv("<plotdata>", e);
    w.write_record(&header).map_err(to_err)?;
    for line in &lines {
        w.write_record(line).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<plotdata>", e))
}
