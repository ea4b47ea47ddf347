//! Report rows and their CSV / JSON serialisation.

use std::io;
use std::path::Path;

use serde::Serialize;

use super::config::Parameters;

/// Version of the CSV and JSON layouts.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "quantity",
    "analytic",
    "estimate",
    "stderr",
    "tolerance",
    "pass",
    "runtime_s",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub quantity: String,
    pub analytic: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub runtime_s: Option<f64>,
}

impl ReportRow {
    /// Passes iff `|estimate - analytic| <= tolerance`.
    pub fn two_sided(experiment: &str, quantity: impl Into<String>, analytic: f64, estimate: f64, stderr: f64, tolerance: f64) -> Self {
        Self::with_pass(
            experiment,
            quantity,
            Some(analytic),
            estimate,
            stderr,
            tolerance,
            (estimate - analytic).abs() <= tolerance,
        )
    }

    /// Passes iff `estimate <= bound + tolerance`.
    pub fn at_most(experiment: &str, quantity: impl Into<String>, bound: f64, estimate: f64, stderr: f64, tolerance: f64) -> Self {
        Self::with_pass(experiment, quantity, Some(bound), estimate, stderr, tolerance, estimate <= bound + tolerance)
    }

    /// Passes iff `estimate >= bound - tolerance`.
    pub fn at_least(experiment: &str, quantity: impl Into<String>, bound: f64, estimate: f64, stderr: f64, tolerance: f64) -> Self {
        Self::with_pass(experiment, quantity, Some(bound), estimate, stderr, tolerance, estimate >= bound - tolerance)
    }

    pub fn with_pass(
        experiment: &str,
        quantity: impl Into<String>,
        analytic: Option<f64>,
        estimate: f64,
        stderr: f64,
        tolerance: f64,
        pass: bool,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            quantity: quantity.into(),
            analytic,
            estimate,
            stderr,
            tolerance,
            pass,
            runtime_s: None,
        }
    }
}

/// Shortest round-trip form, with an exponent for very small or large
/// magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Write rows under the fixed header. The runtime column is left empty
/// unless `timing` is set, so that reruns are byte-identical.
pub fn write_csv<W: io::Write>(out: W, rows: &[ReportRow], timing: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let runtime = match (timing, r.runtime_s) {
            (true, Some(t)) => format!("{t:.3}"),
            _ => String::new(),
        };
        w.write_record([
            r.experiment.clone(),
            r.quantity.clone(),
            r.analytic.map(num).unwrap_or_default(),
            num(r.estimate),
            num(r.stderr),
            num(r.tolerance),
            r.pass.to_string(),
            runtime,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[ReportRow], timing: bool) -> csv::Result<()> {
    write_csv(std::fs::File::create(path)?, rows, timing)
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub schema_version: u32,
    pub experiment: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub parameters: &'a Parameters,
    pub rows: usize,
    pub passed: usize,
    pub failed: Vec<&'a str>,
    pub all_pass: bool,
    pub runtime_s: f64,
    pub notes: &'a [String],
}

impl<'a> Summary<'a> {
    pub fn new(
        experiment: &'a str,
        seed: u64,
        threads: usize,
        parameters: &'a Parameters,
        rows: &'a [ReportRow],
        runtime_s: f64,
        notes: &'a [String],
    ) -> Self {
        let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.quantity.as_str()).collect();
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            seed,
            threads,
            parameters,
            rows: rows.len(),
            passed: rows.len() - failed.len(),
            all_pass: failed.is_empty(),
            failed,
            runtime_s,
            notes,
        }
    }
}
