//! Command-line harness for rare-event estimation experiments.
//!
//! * [`spec`] — structured-text experiment specifications: benchmark,
//!   methods, sweep grid, repetitions; validated with field-level errors.
//! * [`seed`] — per-run RNG streams derived from (master seed, method,
//!   grid point, repetition), independent of execution order.
//! * [`runner`] — grid expansion and parallel execution; per-run rows and
//!   per-grid-point aggregate statistics.
//! * [`export`] — `runs.csv`/`runs.json`, `aggregate.csv`/`aggregate.json`
//!   and the dimension-sweep plot files.

pub mod export;
pub mod runner;
pub mod seed;
pub mod spec;
