//! Rare-event probability estimation with subset-scheduled adaptive
//! multiple importance sampling.
//!
//! The crate is organised in layers:
//!
//! * [`numkernel`] — dense linear algebra and weighted-moment primitives
//!   (Cholesky, Gaussian log-densities, log-sum-exp, Ledoit–Wolf shrinkage).
//! * [`limitstate`] — the benchmark performance functions S1–S4 and the
//!   standard-normal input model.
//! * [`isw`] — deterministic-mixture importance weighting, effective sample
//!   size and weight tempering.
//! * [`engine`] — the adaptive sampler itself: subset-style threshold
//!   scheduling, sample reassignment, cross-entropy proposal updates and
//!   estimate recycling.
//! * [`baselines`] — crude Monte Carlo, single-proposal subset importance
//!   sampling and a cross-entropy population sampler used for comparison.
//! * [`metrics`] — ensemble accuracy metrics (RRMSE, MALE, CoV).

pub mod baselines;
pub mod engine;
pub mod isw;
pub mod limitstate;
pub mod metrics;
pub mod numkernel;
