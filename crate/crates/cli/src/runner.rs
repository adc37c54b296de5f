//! Experiment execution: grid expansion, seeded dispatch over a worker
//! pool, and aggregation of repeated runs into comparison statistics.
//!
//! Tasks are generated in a canonical order — method name, then grid point,
//! then repetition — and executed by index on the pool, so the emitted rows
//! never depend on scheduling. Each run draws from its own RNG stream
//! derived in [`crate::seed`], which makes every row reproducible in
//! isolation.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use sais_core::baselines::{self, CePmcConfig, CrudeMcConfig, SsIsConfig};
use sais_core::engine::{self, SaisConfig};
use sais_core::limitstate::LimitState;
use sais_core::metrics;
use thiserror::Error;

use crate::seed::derive_seed;
use crate::spec::{ExperimentSpec, MethodFamily, MethodSpec, SpecError};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// One (possibly swept) parameter assignment for a method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPoint {
    /// Proposal count; absent for methods without a population of proposals.
    pub n: Option<usize>,
    /// Samples per proposal/level; absent for crude Monte Carlo.
    pub k: Option<usize>,
    /// Benchmark dimension the run is evaluated at.
    pub dim: usize,
    /// Set only when the dimension came from a `d_x` sweep axis.
    pub dim_override: Option<usize>,
}

impl GridPoint {
    /// Canonical identity string, also the seed-derivation key component.
    pub fn id(&self) -> String {
        let mut parts = Vec::new();
        if let Some(n) = self.n {
            parts.push(format!("N={n}"));
        }
        if let Some(k) = self.k {
            parts.push(format!("K={k}"));
        }
        parts.push(format!("d={}", self.dim));
        parts.join(",")
    }
}

/// One fully-specified run.
#[derive(Debug, Clone)]
pub struct Task {
    pub method_index: usize,
    pub point: GridPoint,
    pub repetition: usize,
    pub seed: u64,
}

/// Outcome of one run; one CSV row.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub benchmark: String,
    pub method: String,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub d_x: usize,
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    pub p_f: Option<f64>,
    pub p_f_recycled: Option<f64>,
    pub iterations: Option<usize>,
    pub performance_calls: Option<u64>,
    pub wall_time_ms: f64,
    /// Empty on success; the failure message otherwise.
    pub error: String,
}

/// Aggregate statistics of all successful repetitions at one grid point.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub benchmark: String,
    pub method: String,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub d_x: usize,
    /// Number of successful runs the statistics are computed over.
    pub r: usize,
    pub mean_pf: Option<f64>,
    pub rrmse: Option<f64>,
    pub male: Option<f64>,
    pub cov_percent: Option<f64>,
    pub excluded_zero_count: Option<usize>,
    pub mean_calls: Option<f64>,
}

/// Expand a spec into its full task list in canonical order: methods sorted
/// by name, grid points nested as (d_x, N, K), repetitions innermost.
pub fn expand_tasks(spec: &ExperimentSpec) -> Result<Vec<Task>, RunnerError> {
    let base_dim = spec.benchmark.instantiate(None)?.dim();
    let mut method_order: Vec<usize> = (0..spec.methods.len()).collect();
    method_order.sort_by(|&a, &b| spec.methods[a].name.cmp(&spec.methods[b].name));

    let mut tasks = Vec::new();
    for &method_index in &method_order {
        let method = &spec.methods[method_index];
        for point in method_grid(spec, method, base_dim) {
            let grid_id = point.id();
            for repetition in 0..spec.repetitions {
                tasks.push(Task {
                    method_index,
                    point: point.clone(),
                    repetition,
                    seed: derive_seed(spec.master_seed, &method.name, &grid_id, repetition),
                });
            }
        }
    }
    Ok(tasks)
}

fn method_grid(spec: &ExperimentSpec, method: &MethodSpec, base_dim: usize) -> Vec<GridPoint> {
    let dims: Vec<Option<usize>> = match &spec.sweep.d_x {
        Some(values) => values.iter().map(|&d| Some(d)).collect(),
        None => vec![None],
    };
    let ns: Vec<Option<usize>> = if method.family.uses_n() {
        match (&spec.sweep.n, fixed_n(method)) {
            (Some(values), _) => values.iter().map(|&n| Some(n)).collect(),
            (None, fixed) => vec![fixed],
        }
    } else {
        vec![fixed_n(method)]
    };
    let ks: Vec<Option<usize>> = if method.family.uses_k() {
        match (&spec.sweep.k, fixed_k(method)) {
            (Some(values), _) => values.iter().map(|&k| Some(k)).collect(),
            (None, fixed) => vec![fixed],
        }
    } else {
        vec![fixed_k(method)]
    };

    let mut points = Vec::new();
    for &dim_override in &dims {
        for &n in &ns {
            for &k in &ks {
                points.push(GridPoint {
                    n,
                    k,
                    dim: dim_override.unwrap_or(base_dim),
                    dim_override,
                });
            }
        }
    }
    points
}

fn fixed_n(method: &MethodSpec) -> Option<usize> {
    match &method.family {
        MethodFamily::Sais(s) => s.n,
        MethodFamily::CePmc(s) => s.n,
        // No proposal population: N stays out of the grid identity; rows
        // report the conventional N=1 instead (see `execute`).
        MethodFamily::SsIs(_) | MethodFamily::CrudeMc(_) => None,
    }
}

fn fixed_k(method: &MethodSpec) -> Option<usize> {
    match &method.family {
        MethodFamily::Sais(s) => s.k,
        MethodFamily::CePmc(s) => s.k,
        MethodFamily::SsIs(s) => s.k,
        MethodFamily::CrudeMc(s) => Some(s.samples as usize),
    }
}

/// Run every task of the spec on a pool of `workers` threads (0 or `None`
/// uses all cores). Individual run failures become rows with a populated
/// `error` column; the experiment always completes.
pub fn run_experiment(
    spec: &ExperimentSpec,
    workers: Option<usize>,
) -> Result<Vec<ResultRow>, RunnerError> {
    let tasks = expand_tasks(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| RunnerError::Pool(e.to_string()))?;
    let rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|task| execute(spec, task))
            .collect::<Vec<ResultRow>>()
    });
    Ok(rows)
}

fn execute(spec: &ExperimentSpec, task: &Task) -> ResultRow {
    let method = &spec.methods[task.method_index];
    let point = &task.point;
    // Methods without a proposal population are reported under N=1.
    let display_n = point.n.or(match &method.family {
        MethodFamily::SsIs(_) | MethodFamily::CrudeMc(_) => Some(1),
        _ => None,
    });
    let mut row = ResultRow {
        benchmark: spec.benchmark.name.clone(),
        method: method.name.clone(),
        n: display_n,
        k: point.k,
        d_x: point.dim,
        rho: method_rho(method),
        lambda: method_lambda(method),
        repetition: task.repetition,
        seed: task.seed,
        p_f: None,
        p_f_recycled: None,
        iterations: None,
        performance_calls: None,
        wall_time_ms: 0.0,
        error: String::new(),
    };

    let limit_state = match spec.benchmark.instantiate(point.dim_override) {
        Ok(ls) => ls,
        Err(e) => {
            row.error = e.to_string();
            return row;
        }
    };

    let start = Instant::now();
    let outcome = run_method(method, point, task.seed, &limit_state);
    row.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(summary) => {
            row.p_f = Some(summary.p_f);
            row.p_f_recycled = summary.p_f_recycled;
            row.iterations = Some(summary.iterations);
            row.performance_calls = Some(summary.performance_calls);
        }
        Err(message) => row.error = message,
    }
    row
}

struct RunSummary {
    p_f: f64,
    p_f_recycled: Option<f64>,
    iterations: usize,
    performance_calls: u64,
}

fn run_method(
    method: &MethodSpec,
    point: &GridPoint,
    seed: u64,
    limit_state: &LimitState,
) -> Result<RunSummary, String> {
    let dim = limit_state.dim();
    match &method.family {
        MethodFamily::Sais(s) => {
            let n = point.n.expect("sais grid point always carries N");
            let k = point.k.expect("sais grid point always carries K");
            let mut config = SaisConfig::new(n, k);
            config.quantile = s.rho;
            config.forgetting = s.lambda;
            config.max_iterations = s.max_iterations;
            config.initial_sigma = s.sigma;
            config.lw_centered = s.lw_centered;
            config.init = s.init.to_proposal_init(n, dim);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let run = engine::run_sais(&config, limit_state, &mut rng)
                .map_err(|e| e.to_string())?;
            Ok(RunSummary {
                p_f: run.p_f_last_iteration,
                p_f_recycled: Some(run.p_f_recycled),
                iterations: run.iterations_used,
                performance_calls: run.performance_calls,
            })
        }
        MethodFamily::CePmc(s) => {
            let n = point.n.expect("ce_pmc grid point always carries N");
            let k = point.k.expect("ce_pmc grid point always carries K");
            let mut config = CePmcConfig::new(n, k);
            config.quantile = s.rho;
            config.refine_iterations = s.refine_iterations;
            config.max_iterations = s.max_iterations;
            config.initial_sigma = s.sigma;
            config.init = s.init.to_proposal_init(n, dim);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let run =
                baselines::ce_pmc(&config, limit_state, &mut rng).map_err(|e| e.to_string())?;
            Ok(RunSummary {
                p_f: run.p_f,
                p_f_recycled: None,
                iterations: run.iterations,
                performance_calls: run.performance_calls,
            })
        }
        MethodFamily::SsIs(s) => {
            let k = point.k.expect("ss_is grid point always carries K");
            let mut config = SsIsConfig::new(k);
            config.quantile = s.rho;
            config.sigma = s.sigma;
            config.max_levels = s.max_levels;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let run =
                baselines::ss_is(&config, limit_state, &mut rng).map_err(|e| e.to_string())?;
            Ok(RunSummary {
                p_f: run.p_f,
                p_f_recycled: None,
                iterations: run.levels.len(),
                performance_calls: run.performance_calls,
            })
        }
        MethodFamily::CrudeMc(s) => {
            let config = CrudeMcConfig {
                total_samples: s.samples,
                seed,
                block_size: 1_000_000,
            };
            let run = baselines::crude_mc(&config, limit_state).map_err(|e| e.to_string())?;
            Ok(RunSummary {
                p_f: run.p_f,
                p_f_recycled: None,
                iterations: 1,
                performance_calls: run.total_samples,
            })
        }
    }
}

fn method_rho(method: &MethodSpec) -> Option<f64> {
    match &method.family {
        MethodFamily::Sais(s) => Some(s.rho),
        MethodFamily::CePmc(s) => Some(s.rho),
        MethodFamily::SsIs(s) => Some(s.rho),
        MethodFamily::CrudeMc(_) => None,
    }
}

fn method_lambda(method: &MethodSpec) -> Option<f64> {
    match &method.family {
        MethodFamily::Sais(s) => Some(s.lambda),
        _ => None,
    }
}

/// Aggregate rows into per-(method, grid point) statistics. A `sais` method
/// yields two aggregate entries: the last-iteration estimator under its own
/// name and the recycled estimator under `<name>_recycled`.
pub fn aggregate_rows(spec: &ExperimentSpec, rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<(String, Option<usize>, Option<usize>, usize, Option<usize>)> = Vec::new();
    for row in rows {
        let dim_override = spec.sweep.d_x.as_ref().map(|_| row.d_x);
        let key = (row.method.clone(), row.n, row.k, row.d_x, dim_override);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }

    let mut aggregates = Vec::new();
    for (method, n, k, d_x, dim_override) in groups {
        let reference = spec
            .benchmark
            .instantiate(dim_override)
            .ok()
            .and_then(|ls| ls.reference_pf());
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.method == method && r.n == n && r.k == k && r.d_x == d_x)
            .collect();

        let is_sais = group.iter().any(|r| r.p_f_recycled.is_some());
        let estimates: Vec<f64> = group.iter().filter_map(|r| r.p_f).collect();
        let calls: Vec<u64> = group.iter().filter_map(|r| r.performance_calls).collect();
        aggregates.push(build_aggregate(
            &spec.benchmark.name,
            method.clone(),
            n,
            k,
            d_x,
            &estimates,
            &calls,
            reference,
        ));
        if is_sais {
            let recycled: Vec<f64> = group.iter().filter_map(|r| r.p_f_recycled).collect();
            aggregates.push(build_aggregate(
                &spec.benchmark.name,
                format!("{method}_recycled"),
                n,
                k,
                d_x,
                &recycled,
                &calls,
                reference,
            ));
        }
    }
    aggregates.sort_by(|a, b| {
        (&a.method, a.d_x, a.n, a.k).cmp(&(&b.method, b.d_x, b.n, b.k))
    });
    aggregates
}

#[allow(clippy::too_many_arguments)]
fn build_aggregate(
    benchmark: &str,
    method: String,
    n: Option<usize>,
    k: Option<usize>,
    d_x: usize,
    estimates: &[f64],
    calls: &[u64],
    reference: Option<f64>,
) -> AggregateRow {
    let r = estimates.len();
    let mean_pf = (r > 0).then(|| estimates.iter().sum::<f64>() / r as f64);
    let mean_calls =
        (!calls.is_empty()).then(|| calls.iter().sum::<u64>() as f64 / calls.len() as f64);
    let excluded_zero_count =
        (r > 0).then(|| estimates.iter().filter(|&&e| e == 0.0).count());
    let rrmse = reference.and_then(|p| metrics::rrmse(estimates, p).ok());
    let male = reference.and_then(|p| metrics::male(estimates, p).ok().map(|(v, _)| v));
    let cov_percent = metrics::cov_percent(estimates).ok();
    AggregateRow {
        benchmark: benchmark.to_string(),
        method,
        n,
        k,
        d_x,
        r,
        mean_pf,
        rrmse,
        male,
        cov_percent,
        excluded_zero_count,
        mean_calls,
    }
}

/// Sort rows into the canonical (method, grid point, repetition) order.
/// Task expansion already produces this order; re-sorting keeps the output
/// contract independent of how rows were gathered.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.method, a.d_x, a.n, a.k, a.repetition).cmp(&(
            &b.method,
            b.d_x,
            b.n,
            b.k,
            b.repetition,
        ))
    });
}
