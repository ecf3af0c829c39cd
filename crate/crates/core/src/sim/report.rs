//! Serialized summaries of runs and sweeps.
//!
//! Metric CSV columns, in order: `controller, epsilon, fleet_size, seed,
//! requests, served, unserved, served_fraction, mean_wait_s, median_wait_s,
//! customer_km, rebalance_km, pickup_km, total_km, mpc_steps,
//! rebalance_trips`. Every value is a deterministic function of the run, so
//! repeated runs give byte-identical files.
//!
//! Solver timings go in a separate CSV with columns `controller, epsilon,
//! fleet_size, seed, solves, solve_mean_s, solve_median_s, solve_std_s,
//! solve_max_s`. Wait columns are empty when nothing was served.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::SimMetrics;
use super::sweep::SweepResult;
use crate::error::{Error, Result};

pub const METRIC_COLUMNS: [&str; 16] = [
    "controller",
    "epsilon",
    "fleet_size",
    "seed",
    "requests",
    "served",
    "unserved",
    "served_fraction",
    "mean_wait_s",
    "median_wait_s",
    "customer_km",
    "rebalance_km",
    "pickup_km",
    "total_km",
    "mpc_steps",
    "rebalance_trips",
];

pub const TIMING_COLUMNS: [&str; 9] = [
    "controller",
    "epsilon",
    "fleet_size",
    "seed",
    "solves",
    "solve_mean_s",
    "solve_median_s",
    "solve_std_s",
    "solve_max_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

/// A metrics file: one run or a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportInput {
    Run(SimMetrics),
    Sweep(SweepResult),
}

impl ReportInput {
    pub fn runs(&self) -> &[SimMetrics] {
        match self {
            ReportInput::Run(m) => std::slice::from_ref(m),
            ReportInput::Sweep(s) => &s.points,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &to_json(self))
    }
}

fn km(m: u64) -> String {
    format!("{}.{:03}", m / 1000, m % 1000)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.3}"))
}

fn metric_row(m: &SimMetrics) -> Vec<String> {
    let d = m.fleet_distance();
    vec![
        m.controller.to_string(),
        m.epsilon.to_string(),
        m.fleet_size.to_string(),
        m.seed.to_string(),
        m.total_requests.to_string(),
        m.served().to_string(),
        m.unserved.to_string(),
        format!("{:.6}", m.served_fraction()),
        opt(m.mean_wait()),
        opt(m.median_wait()),
        km(d.customer_m),
        km(d.rebalance_m),
        km(d.pickup_m),
        km(d.total_m),
        m.mpc_steps.to_string(),
        m.rebalance_trips.to_string(),
    ]
}

fn timing_row(m: &SimMetrics) -> Vec<String> {
    let s = m.solve_stats();
    vec![
        m.controller.to_string(),
        m.epsilon.to_string(),
        m.fleet_size.to_string(),
        m.seed.to_string(),
        s.count.to_string(),
        format!("{:.6}", s.mean),
        format!("{:.6}", s.median),
        format!("{:.6}", s.std),
        format!("{:.6}", s.max),
    ]
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Deterministic metric CSV, one row per run.
pub fn metrics_csv(runs: &[SimMetrics]) -> String {
    csv_text(&METRIC_COLUMNS, runs.iter().map(metric_row))
}

/// Solver timing CSV, one row per run.
pub fn timing_csv(runs: &[SimMetrics]) -> String {
    csv_text(&TIMING_COLUMNS, runs.iter().map(timing_row))
}

pub fn to_json(input: &ReportInput) -> String {
    serde_json::to_string_pretty(input).expect("metrics serialize")
}

/// Aligned plain-text table of the metric and timing columns.
pub fn table(runs: &[SimMetrics]) -> String {
    let header: Vec<&str> = METRIC_COLUMNS.iter().chain(&TIMING_COLUMNS[4..]).copied().collect();
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|m| {
            let mut r = metric_row(m);
            r.extend(timing_row(m).into_iter().skip(4));
            r
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.clone(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Render a metrics file. CSV means the deterministic metric CSV; pass
/// `timing` to get the solver timing CSV instead.
pub fn report(input: &ReportInput, format: ReportFormat, timing: bool) -> String {
    match format {
        ReportFormat::Table => table(input.runs()),
        ReportFormat::Csv if timing => timing_csv(input.runs()),
        ReportFormat::Csv => metrics_csv(input.runs()),
        ReportFormat::Json => to_json(input),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::ControllerKind;
    use crate::sim::metrics::DistanceLedger;

    fn run(waits: Vec<f64>) -> SimMetrics {
        SimMetrics {
            controller: ControllerKind::Gbm,
            epsilon: 0.35,
            seed: 3,
            fleet_size: 2,
            total_requests: 4,
            waits,
            unserved: 1,
            vehicles: vec![DistanceLedger {
                customer_m: 1500,
                rebalance_m: 0,
                pickup_m: 250,
                total_m: 1750,
            }],
            mpc_steps: 0,
            rebalance_trips: 0,
            solve_seconds: vec![],
        }
    }

    #[test]
    fn empty_metrics_give_a_header_only_csv() {
        assert_eq!(metrics_csv(&[]), format!("{}\n", METRIC_COLUMNS.join(",")));
        assert_eq!(timing_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn csv_values() {
        let csv = metrics_csv(&[run(vec![10.0, 20.0, 30.0])]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, "gbm,0.35,2,3,4,3,1,0.750000,20.000,20.000,1.500,0.000,0.250,1.750,0,0");
        let none = metrics_csv(&[run(vec![])]);
        assert!(none.lines().nth(1).unwrap().contains(",0.000000,,,"));
    }

    #[test]
    fn json_round_trip_and_table() {
        let input = ReportInput::Run(run(vec![5.0]));
        let back: ReportInput = serde_json::from_str(&to_json(&input)).unwrap();
        assert_eq!(back, input);
        let t = report(&input, ReportFormat::Table, false);
        assert_eq!(t.lines().count(), 2);
        assert!(t.starts_with("controller"));
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
