//! The adaptive sampler: a population of Gaussian proposals is steered toward
//! the failure region through a ladder of intermediate performance thresholds,
//! while every iteration contributes an unbiased mixture-importance estimate
//! of the failure probability.
//!
//! Each iteration:
//!
//! 1. draws `K` points from each of the `N` proposals and keeps as *seeds*
//!    the points inside the previous threshold's region;
//! 2. picks per-proposal *elites* (the best `floor(rho * M_n)` seeds), pools
//!    them and reads the next threshold off an order statistic of the pool,
//!    clamping at the true failure boundary `b = 0`;
//! 3. reassigns seeds to the mixture component most responsible for them,
//!    then refits each component by weighted moments (cross-entropy update)
//!    with an effective-sample-size gate: starved components fall back to
//!    tempered weights, and every covariance update is blended with its
//!    predecessor by a dispersion-driven shrinkage coefficient plus a trace
//!    regulariser;
//! 4. records the unnormalised-mixture-weight failure estimate over the whole
//!    batch.
//!
//! When the threshold ladder reaches 0 the sampler runs one last iteration
//! with proposals that were already adapted against the true failure region,
//! then combines all per-iteration estimates with exponential forgetting
//! (`alpha_t ~ lambda^(T-t)`) into the final recycled estimate.

use rand::Rng;
use thiserror::Error;

use crate::isw::{self, IswError, MixtureProposal, WeightedSample};
use crate::limitstate::{CountingEvaluator, LimitState, LimitStateError};
use crate::numkernel::{
    self, cholesky, Matrix, NumError, ProposalParams, Vector,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no proposal produced a seed inside the current region at iteration {iteration}")]
    NoSeedsAnywhere { iteration: usize },
    #[error("threshold adaptation received no elites")]
    EmptyElites,
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Isw(#[from] IswError),
    #[error(transparent)]
    LimitState(#[from] LimitStateError),
}

/// How proposal means are placed before the first iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalInit {
    /// One mean per proposal, dimension-checked at run start.
    Explicit(Vec<Vector>),
    /// Each coordinate drawn uniformly from `[lo, hi]` using the run's
    /// random stream (so placement is part of the seeded randomness).
    UniformBox { lo: f64, hi: f64 },
}

/// Schedule for the trace-regulariser gain `eta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaSchedule {
    /// `eta_t = 0.1 / t` (default).
    #[default]
    InverseT,
    /// `eta_t = beta_t / t`, reusing the shrinkage coefficient.
    BetaOverT,
}

impl EtaSchedule {
    fn eta(self, t: usize, beta: f64) -> f64 {
        match self {
            EtaSchedule::InverseT => 0.1 / t as f64,
            EtaSchedule::BetaOverT => beta / t as f64,
        }
    }
}

/// Which end of the pooled elite order statistic the threshold reads from.
///
/// `Descending` (default) sorts elite performances from largest to smallest
/// and takes the `floor(rho A)`-th entry; since elites are already the best
/// `rho`-fraction of seeds this lands near the `rho (1 - rho)` seed quantile
/// and advances the ladder at a subset-simulation-like pace. `Ascending` reads
/// the same index from the other end (an aggressive `rho^2` quantile); it is
/// exposed for comparison and validated in the test suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdOrdering {
    #[default]
    Descending,
    Ascending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaisConfig {
    /// Number of proposals `N`.
    pub n_proposals: usize,
    /// Samples per proposal per iteration `K`.
    pub samples_per_proposal: usize,
    /// Elite/threshold quantile `rho`.
    pub quantile: f64,
    /// Forgetting factor `lambda` of the recycled estimator, in (0, 1).
    pub forgetting: f64,
    /// Failure boundary; 0 for the standard `S(x) <= 0` convention.
    pub target_threshold: f64,
    /// Hard iteration cap.
    pub max_iterations: usize,
    pub init: ProposalInit,
    /// Initial proposal scale: covariance starts at `sigma^2 I`.
    pub initial_sigma: f64,
    pub eta_schedule: EtaSchedule,
    /// Center the shrinkage-coefficient outer products at the update mean
    /// instead of using raw second moments.
    pub lw_centered: bool,
    pub threshold_ordering: ThresholdOrdering,
}

impl SaisConfig {
    pub fn new(n_proposals: usize, samples_per_proposal: usize) -> Self {
        Self {
            n_proposals,
            samples_per_proposal,
            quantile: 0.1,
            forgetting: 0.5,
            target_threshold: 0.0,
            max_iterations: 50,
            init: ProposalInit::UniformBox { lo: -4.0, hi: 4.0 },
            initial_sigma: 1.0,
            eta_schedule: EtaSchedule::InverseT,
            lw_centered: false,
            threshold_ordering: ThresholdOrdering::Descending,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), EngineError> {
        let err = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.n_proposals == 0 {
            return err("n_proposals must be at least 1".into());
        }
        if self.samples_per_proposal == 0 {
            return err("samples_per_proposal must be at least 1".into());
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return err(format!("quantile must lie in (0, 1), got {}", self.quantile));
        }
        if !(self.forgetting > 0.0 && self.forgetting < 1.0) {
            return err(format!(
                "forgetting must lie in (0, 1), got {}",
                self.forgetting
            ));
        }
        if self.max_iterations == 0 {
            return err("max_iterations must be at least 1".into());
        }
        if !(self.initial_sigma > 0.0) {
            return err(format!(
                "initial_sigma must be positive, got {}",
                self.initial_sigma
            ));
        }
        let budget = self.quantile
            * (self.n_proposals as f64)
            * (self.samples_per_proposal as f64);
        if budget < 1.0 {
            return err(format!(
                "quantile * N * K = {budget} < 1: no elite would survive"
            ));
        }
        match &self.init {
            ProposalInit::Explicit(means) => {
                if means.len() != self.n_proposals {
                    return err(format!(
                        "init supplies {} means for {} proposals",
                        means.len(),
                        self.n_proposals
                    ));
                }
                for m in means {
                    if m.len() != dim {
                        return err(format!(
                            "init mean dimension {} does not match benchmark dimension {dim}",
                            m.len()
                        ));
                    }
                }
            }
            ProposalInit::UniformBox { lo, hi } => {
                if !(lo < hi) {
                    return err(format!("init box [{lo}, {hi}] is empty"));
                }
            }
        }
        Ok(())
    }
}

/// Diagnostics of one completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetLevel {
    /// Iteration index, 1-based.
    pub t: usize,
    pub threshold: f64,
    /// Batch indices of the pooled elites, grouped by proposal and ordered by
    /// ascending performance within each group.
    pub elites: Vec<usize>,
    /// Seeds drawn per proposal (by origin) at this iteration.
    pub per_proposal_failure_counts: Vec<usize>,
    /// Unnormalised-weight failure estimate of this iteration's batch.
    pub intermediate_estimate: f64,
    /// Gate ESS of each proposal's assigned seed set (0 when none assigned).
    pub ess_per_proposal: Vec<f64>,
    pub proposal_params_after: Vec<ProposalParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaisResult {
    /// Forgetting-weighted combination of all per-iteration estimates.
    pub p_f_recycled: f64,
    /// The final iteration's estimate alone.
    pub p_f_last_iteration: f64,
    pub levels: Vec<SubsetLevel>,
    pub iterations_used: usize,
    pub performance_calls: u64,
    /// Normalised recycling weights (sum to 1), one per iteration.
    pub alpha_weights: Vec<f64>,
    /// False when the run hit `max_iterations` before the threshold ladder
    /// reached the target; the trace and estimates are still populated.
    pub converged: bool,
    /// Failure-region points of the final iteration (mode-coverage
    /// diagnostics).
    pub final_failure_points: Vec<Vector>,
}

/// Indices of samples inside the region `{S <= threshold}`.
pub fn select_failure_seeds(samples: &[WeightedSample], threshold: f64) -> Vec<usize> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.performance <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Per-proposal elites: the `floor(rho * M_n)` seeds with smallest
/// performance, keeping at least one whenever a proposal has any seed.
///
/// Returns batch indices grouped by proposal, ascending performance inside
/// each group.
pub fn select_elites(
    samples: &[WeightedSample],
    seeds_by_origin: &[Vec<usize>],
    rho: f64,
) -> Vec<usize> {
    let mut elites = Vec::new();
    for seed_idx in seeds_by_origin {
        let m = seed_idx.len();
        if m == 0 {
            continue;
        }
        let count = (((rho * m as f64).floor() as usize).max(1)).min(m);
        let mut order = seed_idx.clone();
        order.sort_by(|&a, &b| {
            samples[a]
                .performance
                .total_cmp(&samples[b].performance)
                .then(a.cmp(&b))
        });
        elites.extend_from_slice(&order[..count]);
    }
    elites
}

/// Pool elite performances and read the next threshold off the
/// `floor(rho * A)`-th order statistic (1-based, clamped to the pool).
///
/// Values at or below `target_b` clamp to `target_b` exactly: the final
/// ladder level always sits on the true failure boundary.
pub fn adapt_threshold(
    elite_performances: &[f64],
    rho: f64,
    target_b: f64,
    ordering: ThresholdOrdering,
) -> Result<f64, EngineError> {
    if elite_performances.is_empty() {
        return Err(EngineError::EmptyElites);
    }
    let a = elite_performances.len();
    let mut sorted = elite_performances.to_vec();
    match ordering {
        ThresholdOrdering::Descending => sorted.sort_by(|x, y| y.total_cmp(x)),
        ThresholdOrdering::Ascending => sorted.sort_by(|x, y| x.total_cmp(y)),
    }
    let idx = ((rho * a as f64).floor() as usize).clamp(1, a);
    let b = sorted[idx - 1];
    Ok(if b <= target_b { target_b } else { b })
}

/// Hard reassignment: each sample moves to the mixture component with the
/// highest responsibility (ties to the lowest index).
pub fn reassign_samples(
    samples: &mut [WeightedSample],
    indices: &[usize],
    mixture: &MixtureProposal,
) -> Result<(), EngineError> {
    if indices.is_empty() {
        return Ok(());
    }
    let points: Vec<Vector> = indices.iter().map(|&i| samples[i].point.clone()).collect();
    let per_component = mixture.component_log_pdfs(&points)?;
    for (j, &i) in indices.iter().enumerate() {
        samples[i].assigned_proposal = argmax_component(per_component.iter().map(|row| row[j]));
    }
    Ok(())
}

fn argmax_component(log_pdfs: impl Iterator<Item = f64>) -> usize {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (n, v) in log_pdfs.enumerate() {
        if v > best_val {
            best_val = v;
            best = n;
        }
    }
    best
}

/// Outcome of one cross-entropy update pass over all proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct CeUpdateOutcome {
    pub params: Vec<ProposalParams>,
    /// Gate ESS per proposal (0 when no seed was assigned).
    pub ess: Vec<f64>,
    /// Whether the tempered fallback fired.
    pub tempered: Vec<bool>,
    /// Whether the proposal kept its previous parameters.
    pub kept_previous: Vec<bool>,
}

/// Refit every proposal from its assigned seeds.
///
/// Per proposal: the gate ESS comes from the normalised mixture weights of
/// the full assigned set and is compared against half the assignment count.
/// Moments are taken over the assigned seeds inside the current threshold,
/// with the scatter centered at the previous mean (gate passed) or at the
/// tempered mean (gate failed). The covariance is then blended:
/// `(1 - beta) prev + beta scatter + eta (tr(scatter)/d) I`, with `beta`
/// measured over the proposal's full fresh batch (pinned to 1 when the
/// dispersion criterion degenerates, e.g. in one dimension). Proposals with
/// no usable update — no assigned seeds, fully underflowed weights, or a
/// blended covariance that stays non-SPD after the jitter retry — keep
/// their parameters.
pub fn ce_update(
    samples: &[WeightedSample],
    assigned_by_proposal: &[Vec<usize>],
    params: &[ProposalParams],
    t: usize,
    b_t: f64,
    config: &SaisConfig,
) -> Result<CeUpdateOutcome, EngineError> {
    let n = params.len();
    let mut out = CeUpdateOutcome {
        params: Vec::with_capacity(n),
        ess: vec![0.0; n],
        tempered: vec![false; n],
        kept_previous: vec![false; n],
    };

    for comp in 0..n {
        let assigned = &assigned_by_proposal[comp];
        if assigned.is_empty() {
            out.params.push(params[comp].clone());
            out.kept_previous[comp] = true;
            continue;
        }

        let assigned_logs: Vec<f64> = assigned.iter().map(|&i| samples[i].log_weight).collect();
        let gate_ess = match isw::normalize_log_weights(&assigned_logs).and_then(|w| isw::ess(&w))
        {
            Ok(e) => e,
            // every assigned weight underflowed: no usable update signal
            Err(isw::IswError::AllImpossible) => {
                out.params.push(params[comp].clone());
                out.kept_previous[comp] = true;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        out.ess[comp] = gate_ess;

        let update: Vec<usize> = assigned
            .iter()
            .copied()
            .filter(|&i| samples[i].performance <= b_t)
            .collect();
        if update.is_empty() {
            out.params.push(params[comp].clone());
            out.kept_previous[comp] = true;
            continue;
        }
        let points: Vec<Vector> = update.iter().map(|&i| samples[i].point.clone()).collect();
        let mut logs: Vec<f64> = update.iter().map(|&i| samples[i].log_weight).collect();

        let gate_passed = gate_ess >= assigned.len() as f64 / 2.0;
        if !gate_passed {
            logs = isw::temper_log_weights(&logs, t);
            out.tempered[comp] = true;
        }
        let weights = match isw::normalize_log_weights(&logs) {
            Ok(w) => w,
            Err(isw::IswError::AllImpossible) => {
                out.params.push(params[comp].clone());
                out.kept_previous[comp] = true;
                out.tempered[comp] = false;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mean_new = numkernel::weighted_mean(&points, &weights)?;
        // gate passed: scatter about the previous mean; tempered fallback:
        // scatter about the tempered mean itself
        let center = if gate_passed { params[comp].mean.clone() } else { mean_new.clone() };
        let scatter = numkernel::weighted_covariance(&points, &weights, &center)?;

        // The blend coefficient measures the dispersion of the proposal's
        // full fresh batch against the scatter estimate, so it scales like
        // 1/K and the covariance moves conservatively per iteration.
        let own_points: Vec<Vector> = samples
            .iter()
            .filter(|s| s.origin_proposal == comp)
            .map(|s| s.point.clone())
            .collect();
        let beta = match if config.lw_centered {
            numkernel::lw_shrinkage_coefficient_centered(&own_points, &center, &scatter)
        } else {
            numkernel::lw_shrinkage_coefficient(&own_points, &scatter)
        } {
            Ok(b) => b,
            Err(NumError::ZeroDenominator) => 1.0,
            Err(e) => return Err(e.into()),
        };
        let eta = config.eta_schedule.eta(t, beta);
        let mut cov_new = numkernel::shrink_covariance(&params[comp].covariance, &scatter, beta, eta);
        if cholesky(&cov_new).is_err() {
            let d = cov_new.nrows();
            let jitter = numkernel::JITTER_SCALE * cov_new.trace() / d as f64;
            cov_new += Matrix::identity(d, d) * jitter;
            if cholesky(&cov_new).is_err() {
                // degenerate beyond repair: keep the previous (valid) params
                out.params.push(params[comp].clone());
                out.kept_previous[comp] = true;
                out.tempered[comp] = false;
                continue;
            }
        }
        out.params.push(ProposalParams::new(mean_new, cov_new));
    }
    Ok(out)
}

/// Normalised recycling weights for a `t_total`-iteration run:
/// `alpha_t ~ lambda^(T - t)`, scaled by `(1-lambda)/(1-lambda^T)` so they
/// sum to one (geometric series).
pub fn recycling_weights(lambda: f64, t_total: usize) -> Vec<f64> {
    let norm = (1.0 - lambda) / (1.0 - lambda.powi(t_total as i32));
    (1..=t_total)
        .map(|t| norm * lambda.powi((t_total - t) as i32))
        .collect()
}

/// Run the sampler to completion on one benchmark.
pub fn run_sais<R: Rng + ?Sized>(
    config: &SaisConfig,
    limit_state: &LimitState,
    rng: &mut R,
) -> Result<SaisResult, EngineError> {
    let dim = limit_state.dim();
    config.validate(dim)?;
    let target = limit_state.target();
    let evaluator = CountingEvaluator::new(limit_state);
    let n = config.n_proposals;
    let k = config.samples_per_proposal;

    let mut params: Vec<ProposalParams> = match &config.init {
        ProposalInit::Explicit(means) => means
            .iter()
            .map(|m| ProposalParams::isotropic(m.clone(), config.initial_sigma))
            .collect(),
        ProposalInit::UniformBox { lo, hi } => (0..n)
            .map(|_| {
                let mean = Vector::from_fn(dim, |_, _| rng.random_range(*lo..=*hi));
                ProposalParams::isotropic(mean, config.initial_sigma)
            })
            .collect(),
    };

    let mut levels: Vec<SubsetLevel> = Vec::new();
    let mut intermediates: Vec<f64> = Vec::new();
    let mut final_failure_points: Vec<Vector> = Vec::new();
    let mut b_prev = f64::INFINITY;
    let mut final_pending = false;
    let mut converged = true;
    let mut t = 1usize;

    loop {
        let mixture = MixtureProposal::new(params.clone())?;

        // Step 1: sample and evaluate
        let mut batch: Vec<WeightedSample> = Vec::with_capacity(n * k);
        for (comp, p) in params.iter().enumerate() {
            for point in numkernel::mvn_sample(rng, p, k)? {
                let performance = evaluator.evaluate(&point)?;
                batch.push(WeightedSample {
                    point,
                    performance,
                    origin_proposal: comp,
                    assigned_proposal: comp,
                    log_weight: 0.0,
                    normalized_weight: 0.0,
                });
            }
        }

        // seeds: inside the previous region, grouped by origin
        let seeds = select_failure_seeds(&batch, b_prev);
        let mut seeds_by_origin: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &i in &seeds {
            seeds_by_origin[batch[i].origin_proposal].push(i);
        }
        let per_proposal_failure_counts: Vec<usize> =
            seeds_by_origin.iter().map(Vec::len).collect();
        if seeds.is_empty() && !final_pending {
            return Err(EngineError::NoSeedsAnywhere { iteration: t });
        }

        // Step 2: threshold adaptation (fixed at the target on the last pass)
        let (b_t, elites) = if final_pending {
            (config.target_threshold, Vec::new())
        } else {
            let elites = select_elites(&batch, &seeds_by_origin, config.quantile);
            let perfs: Vec<f64> = elites.iter().map(|&i| batch[i].performance).collect();
            let b = adapt_threshold(
                &perfs,
                config.quantile,
                config.target_threshold,
                config.threshold_ordering,
            )?;
            (b, elites)
        };
        debug_assert!(
            b_t < b_prev || b_t == config.target_threshold,
            "threshold ladder must strictly decrease until the final clamp"
        );

        // mixture log-densities once per batch: weights + responsibilities
        let points: Vec<Vector> = batch.iter().map(|s| s.point.clone()).collect();
        let per_component = mixture.component_log_pdfs(&points)?;
        let log_mix = isw::mixture_log_density_from_parts(&per_component, points.len());
        for (i, s) in batch.iter_mut().enumerate() {
            s.log_weight = target.log_density(&s.point) - log_mix[i];
        }
        let normalized = isw::normalize_log_weights(
            &batch.iter().map(|s| s.log_weight).collect::<Vec<_>>(),
        )?;
        for (s, w) in batch.iter_mut().zip(normalized) {
            s.normalized_weight = w;
        }

        // Step 3a: hard reassignment of seeds by responsibility
        for &i in &seeds {
            batch[i].assigned_proposal =
                argmax_component(per_component.iter().map(|row| row[i]));
        }
        let mut assigned_by_proposal: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &i in &seeds {
            assigned_by_proposal[batch[i].assigned_proposal].push(i);
        }

        // Step 4: this iteration's failure estimate over the whole batch
        let intermediate = isw::intermediate_failure_estimate(&batch)?;
        intermediates.push(intermediate);

        // Step 3b-e: refit proposals
        let update = ce_update(&batch, &assigned_by_proposal, &params, t, b_t, config)?;

        final_failure_points.clear();
        final_failure_points.extend(
            batch
                .iter()
                .filter(|s| s.performance <= 0.0)
                .map(|s| s.point.clone()),
        );

        levels.push(SubsetLevel {
            t,
            threshold: b_t,
            elites,
            per_proposal_failure_counts,
            intermediate_estimate: intermediate,
            ess_per_proposal: update.ess.clone(),
            proposal_params_after: update.params.clone(),
        });

        if final_pending {
            break;
        }
        if b_t == config.target_threshold {
            if t >= config.max_iterations {
                break; // reached the target exactly at the cap: stop here
            }
            final_pending = true;
        } else if t >= config.max_iterations {
            converged = false;
            break;
        }

        params = update.params;
        b_prev = b_t;
        t += 1;
    }

    let t_total = levels.len();
    let alpha_weights = recycling_weights(config.forgetting, t_total);
    debug_assert!(
        (alpha_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12,
        "recycling weights must sum to one"
    );
    let p_f_recycled = alpha_weights
        .iter()
        .zip(&intermediates)
        .map(|(a, i)| a * i)
        .sum();

    Ok(SaisResult {
        p_f_recycled,
        p_f_last_iteration: *intermediates.last().expect("at least one iteration"),
        levels,
        iterations_used: t_total,
        performance_calls: evaluator.calls(),
        alpha_weights,
        converged,
        final_failure_points,
    })
}
