//! Result persistence: run-level CSV/JSON, aggregate CSV/JSON and the
//! dimension-sweep plot exports.
//!
//! Floating-point cells are written with 17 significant digits so every
//! value round-trips bit-exactly; `wall_time_ms` is informational-only and
//! kept short. The JSON files carry the same content as their CSV
//! counterparts with absent cells as `null`.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::runner::{AggregateRow, ResultRow};
use crate::spec::ExperimentSpec;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: String,
        source: io::Error,
    },
    #[error("plot export requires a `d_x` sweep axis in the spec")]
    MissingSweepAxis,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Run-level file format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunFormat {
    Csv,
    Json,
}

/// Format a float with 17 significant digits (exact round-trip).
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RUNS_HEADER: [&str; 15] = [
    "benchmark",
    "method",
    "N",
    "K",
    "d_x",
    "rho",
    "lambda",
    "repetition",
    "seed",
    "p_f",
    "p_f_recycled",
    "iterations",
    "performance_calls",
    "wall_time_ms",
    "error",
];

pub const AGGREGATE_HEADER: [&str; 12] = [
    "benchmark",
    "method",
    "N",
    "K",
    "d_x",
    "R",
    "mean_pf",
    "rrmse",
    "male",
    "cov_percent",
    "excluded_zero_count",
    "mean_calls",
];

fn run_record(row: &ResultRow) -> Vec<String> {
    vec![
        row.benchmark.clone(),
        row.method.clone(),
        opt_usize(row.n),
        opt_usize(row.k),
        row.d_x.to_string(),
        opt_float(row.rho),
        opt_float(row.lambda),
        row.repetition.to_string(),
        row.seed.to_string(),
        opt_float(row.p_f),
        opt_float(row.p_f_recycled),
        opt_usize(row.iterations),
        row.performance_calls
            .map(|c| c.to_string())
            .unwrap_or_default(),
        format!("{:.3}", row.wall_time_ms),
        row.error.clone(),
    ]
}

/// Write `runs.csv` (or `runs.json`) into `dir`.
pub fn write_runs(dir: &Path, rows: &[ResultRow], format: RunFormat) -> Result<(), ExportError> {
    match format {
        RunFormat::Csv => {
            let path = dir.join("runs.csv");
            let mut writer = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            writer.write_record(RUNS_HEADER).map_err(csv_err(&path))?;
            for row in rows {
                writer.write_record(run_record(row)).map_err(csv_err(&path))?;
            }
            writer.flush().map_err(io_err(&path))
        }
        RunFormat::Json => {
            let path = dir.join("runs.json");
            let values: Vec<Value> = rows
                .iter()
                .map(|row| {
                    json!({
                        "benchmark": row.benchmark,
                        "method": row.method,
                        "N": row.n,
                        "K": row.k,
                        "d_x": row.d_x,
                        "rho": row.rho,
                        "lambda": row.lambda,
                        "repetition": row.repetition,
                        "seed": row.seed,
                        "p_f": row.p_f,
                        "p_f_recycled": row.p_f_recycled,
                        "iterations": row.iterations,
                        "performance_calls": row.performance_calls,
                        "wall_time_ms": row.wall_time_ms,
                        "error": row.error,
                    })
                })
                .collect();
            write_json(&path, &Value::Array(values))
        }
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.display().to_string(),
        source: io::Error::other(source),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), ExportError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON serialization is infallible");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Write `aggregate.csv` and `aggregate.json` with identical content.
pub fn write_aggregates(dir: &Path, aggregates: &[AggregateRow]) -> Result<(), ExportError> {
    let csv_path = dir.join("aggregate.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(csv_err(&csv_path))?;
    writer
        .write_record(AGGREGATE_HEADER)
        .map_err(csv_err(&csv_path))?;
    for a in aggregates {
        writer
            .write_record([
                a.benchmark.clone(),
                a.method.clone(),
                opt_usize(a.n),
                opt_usize(a.k),
                a.d_x.to_string(),
                a.r.to_string(),
                opt_float(a.mean_pf),
                opt_float(a.rrmse),
                opt_float(a.male),
                opt_float(a.cov_percent),
                opt_usize(a.excluded_zero_count),
                opt_float(a.mean_calls),
            ])
            .map_err(csv_err(&csv_path))?;
    }
    writer.flush().map_err(io_err(&csv_path))?;

    let values: Vec<Value> = aggregates
        .iter()
        .map(|a| {
            json!({
                "benchmark": a.benchmark,
                "method": a.method,
                "N": a.n,
                "K": a.k,
                "d_x": a.d_x,
                "R": a.r,
                "mean_pf": a.mean_pf,
                "rrmse": a.rrmse,
                "male": a.male,
                "cov_percent": a.cov_percent,
                "excluded_zero_count": a.excluded_zero_count,
                "mean_calls": a.mean_calls,
            })
        })
        .collect();
    write_json(&dir.join("aggregate.json"), &Value::Array(values))
}

/// Write `pf_vs_dim.csv` and `male_vs_dim.csv` for a dimension sweep: one
/// row per (dimension, method), the estimate column in long format and the
/// benchmark's reference probability repeated on every row.
pub fn export_plot_data(
    dir: &Path,
    spec: &ExperimentSpec,
    aggregates: &[AggregateRow],
) -> Result<(), ExportError> {
    if spec.sweep.d_x.is_none() {
        return Err(ExportError::MissingSweepAxis);
    }

    // Long-format points keyed by (dim, method); aggregates are already
    // per grid point and a dimension sweep has one point per (dim, method).
    let mut points: Vec<&AggregateRow> = aggregates.iter().collect();
    points.sort_by(|a, b| (a.d_x, &a.method).cmp(&(b.d_x, &b.method)));

    let reference = |dim: usize| -> Option<f64> {
        spec.benchmark
            .instantiate(Some(dim))
            .ok()
            .and_then(|ls| ls.reference_pf())
    };

    let pf_path = dir.join("pf_vs_dim.csv");
    let mut writer = csv::Writer::from_path(&pf_path).map_err(csv_err(&pf_path))?;
    writer
        .write_record(["dim", "method", "mean_pf", "reference_pf"])
        .map_err(csv_err(&pf_path))?;
    for a in &points {
        writer
            .write_record([
                a.d_x.to_string(),
                a.method.clone(),
                opt_float(a.mean_pf),
                opt_float(reference(a.d_x)),
            ])
            .map_err(csv_err(&pf_path))?;
    }
    writer.flush().map_err(io_err(&pf_path))?;

    let male_path = dir.join("male_vs_dim.csv");
    let mut writer = csv::Writer::from_path(&male_path).map_err(csv_err(&male_path))?;
    writer
        .write_record(["dim", "method", "male", "reference_pf"])
        .map_err(csv_err(&male_path))?;
    for a in &points {
        writer
            .write_record([
                a.d_x.to_string(),
                a.method.clone(),
                opt_float(a.male),
                opt_float(reference(a.d_x)),
            ])
            .map_err(csv_err(&male_path))?;
    }
    writer.flush().map_err(io_err(&male_path))
}
