//! `rare-sais`: run seeded rare-event estimation experiments from spec
//! files, check benchmarks against crude Monte Carlo, and list the built-in
//! limit states.
//!
//! Exit codes: 0 on success, 1 on a spec or usage error, 2 when the
//! experiment completed but at least one run failed (rows are still
//! written, with the failure in the `error` column).

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rare_sais::export::{self, RunFormat};
use rare_sais::runner::{aggregate_rows, run_experiment, sort_rows};
use rare_sais::spec::parse_spec;
use sais_core::baselines::{crude_mc, CrudeMcConfig};
use sais_core::limitstate::{benchmark_names, LimitState};

#[derive(Parser)]
#[command(
    name = "rare-sais",
    version,
    about = "Rare-event probability estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write run/aggregate files.
    Run {
        /// Path to the spec file.
        spec: PathBuf,
        /// Output directory (overrides the spec's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Run-level output format; aggregates are always CSV + JSON.
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Shortcut for `--repetitions 20`.
        #[arg(long)]
        quick: bool,
        /// Override the spec's repetition count.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Estimate a benchmark's failure probability by crude Monte Carlo.
    Oracle {
        /// Benchmark name (see `list-benchmarks`).
        benchmark: String,
        /// Total number of samples.
        #[arg(long)]
        samples: u64,
        /// RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dimension override (flexible-dimension benchmarks only).
        #[arg(long)]
        dim: Option<usize>,
    },
    /// List the built-in benchmarks.
    ListBenchmarks,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode, String> {
    match Cli::parse().command {
        Command::Run {
            spec,
            out,
            workers,
            format,
            quick,
            repetitions,
        } => run_command(spec, out, workers, format, quick, repetitions),
        Command::Oracle {
            benchmark,
            samples,
            seed,
            dim,
        } => oracle_command(&benchmark, samples, seed, dim),
        Command::ListBenchmarks => list_command(),
    }
}

fn run_command(
    spec_path: PathBuf,
    out: Option<PathBuf>,
    workers: Option<usize>,
    format: FormatArg,
    quick: bool,
    repetitions: Option<usize>,
) -> Result<ExitCode, String> {
    let mut spec = parse_spec(&spec_path).map_err(|e| e.to_string())?;
    if let Some(r) = repetitions.or(quick.then_some(20)) {
        if r == 0 {
            return Err("invalid spec: repetitions: must be at least 1".into());
        }
        spec.repetitions = r;
    }
    if let Some(dir) = out {
        spec.output_dir = dir;
    }
    fs::create_dir_all(&spec.output_dir)
        .map_err(|e| format!("cannot create `{}`: {e}", spec.output_dir.display()))?;

    let mut rows = run_experiment(&spec, workers).map_err(|e| e.to_string())?;
    sort_rows(&mut rows);
    let aggregates = aggregate_rows(&spec, &rows);

    let run_format = match format {
        FormatArg::Csv => RunFormat::Csv,
        FormatArg::Json => RunFormat::Json,
    };
    export::write_runs(&spec.output_dir, &rows, run_format).map_err(|e| e.to_string())?;
    export::write_aggregates(&spec.output_dir, &aggregates).map_err(|e| e.to_string())?;
    let run_file = match run_format {
        RunFormat::Csv => "runs.csv",
        RunFormat::Json => "runs.json",
    };
    println!(
        "wrote {} ({} rows) and aggregate.csv/aggregate.json ({} entries)",
        spec.output_dir.join(run_file).display(),
        rows.len(),
        aggregates.len()
    );
    if spec.sweep.d_x.is_some() {
        export::export_plot_data(&spec.output_dir, &spec, &aggregates)
            .map_err(|e| e.to_string())?;
        println!(
            "wrote {} and {}",
            spec.output_dir.join("pf_vs_dim.csv").display(),
            spec.output_dir.join("male_vs_dim.csv").display()
        );
    }

    let failures = rows.iter().filter(|r| !r.error.is_empty()).count();
    if failures > 0 {
        eprintln!(
            "{failures} of {} runs failed; see the error column in {run_file}",
            rows.len()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_command(
    benchmark: &str,
    samples: u64,
    seed: u64,
    dim: Option<usize>,
) -> Result<ExitCode, String> {
    let limit_state =
        LimitState::by_name(benchmark, dim, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let config = CrudeMcConfig::new(samples, seed);
    let result = crude_mc(&config, &limit_state).map_err(|e| e.to_string())?;
    let mut line = format!(
        "benchmark={} d_x={} n={} seed={} failures={} p_f={} se={}",
        limit_state.name(),
        limit_state.dim(),
        result.total_samples,
        seed,
        result.failures,
        export::fmt_float(result.p_f),
        export::fmt_float(result.standard_error),
    );
    if let Some(reference) = limit_state.reference_pf() {
        line.push_str(&format!(" reference={}", export::fmt_float(reference)));
    }
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

fn list_command() -> Result<ExitCode, String> {
    for name in benchmark_names() {
        let ls = LimitState::by_name(name, None, &BTreeMap::new()).map_err(|e| e.to_string())?;
        let params = ls
            .params()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(", ");
        let reference = ls
            .reference_pf()
            .map(|p| format!("{p:.4e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{name}  d_x={}{}  reference_pf={reference}  params: {}",
            ls.dim(),
            if name == &"s4" { " (flexible)" } else { "" },
            if params.is_empty() { "-".into() } else { params },
        );
    }
    Ok(ExitCode::SUCCESS)
}
