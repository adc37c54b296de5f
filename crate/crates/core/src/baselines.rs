//! Reference estimators the adaptive sampler is judged against.
//!
//! * [`crude_mc`] — brute-force Monte Carlo under the target density, block
//!   parallel and bit-reproducible for a given seed regardless of worker
//!   count. Slow but unbiased: the calibration oracle.
//! * [`ss_is`] — sequential importance sampling with a single Gaussian
//!   proposal of fixed scale: a subset-style threshold ladder where the
//!   proposal mean hops to the best point found so far and each level
//!   contributes an importance-weighted conditional factor. Cheap, but
//!   brittle in high dimension and blind to multiple failure modes.
//! * [`ce_pmc`] — classic cross-entropy / population Monte Carlo with a
//!   Gaussian mixture: pooled quantile thresholds and one global moment
//!   refit shared by every component, without seed reassignment, covariance
//!   shrinkage or weight tempering. The ablation that shows what those
//!   pieces buy: with no per-component sample ownership the mixture
//!   contracts onto the dominant design points and multimodal coverage is
//!   lost.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::ProposalInit;
use crate::isw::{self, IswError, MixtureProposal};
use crate::limitstate::{CountingEvaluator, LimitState, LimitStateError};
use crate::numkernel::{
    self, cholesky, Matrix, NumError, ProposalParams, Vector, JITTER_SCALE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no sample reached the current region at level {level}")]
    NoFailureSamples { level: usize },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Isw(#[from] IswError),
    #[error(transparent)]
    LimitState(#[from] LimitStateError),
}

// ---------------------------------------------------------------------------
// crude Monte Carlo
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CrudeMcConfig {
    pub total_samples: u64,
    pub seed: u64,
    /// Samples per parallel block; the block index, not the thread, owns the
    /// random substream, so results do not depend on the worker count.
    pub block_size: u64,
}

impl CrudeMcConfig {
    pub fn new(total_samples: u64, seed: u64) -> Self {
        Self { total_samples, seed, block_size: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrudeMcResult {
    pub p_f: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub standard_error: f64,
    pub failures: u64,
    pub total_samples: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Estimate the failure probability by direct sampling from the standard
/// normal target. Embarrassingly parallel over fixed-size blocks; failure
/// counts are integers, so the total is exact and scheduling-independent.
pub fn crude_mc(
    config: &CrudeMcConfig,
    limit_state: &LimitState,
) -> Result<CrudeMcResult, BaselineError> {
    if config.total_samples == 0 {
        return Err(BaselineError::InvalidConfig(
            "total_samples must be at least 1".into(),
        ));
    }
    if config.block_size == 0 {
        return Err(BaselineError::InvalidConfig(
            "block_size must be at least 1".into(),
        ));
    }
    let dim = limit_state.dim();
    let blocks = config.total_samples.div_ceil(config.block_size);
    let counts: Vec<u64> = (0..blocks)
        .into_par_iter()
        .map(|block| -> Result<u64, BaselineError> {
            use rand::SeedableRng;
            let start = block * config.block_size;
            let len = config.block_size.min(config.total_samples - start);
            let stream = splitmix64(config.seed ^ block.wrapping_mul(0x9E3779B97F4A7C15));
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(stream);
            let mut x = Vector::zeros(dim);
            let mut failures = 0u64;
            for _ in 0..len {
                for j in 0..dim {
                    x[j] = rng.sample(StandardNormal);
                }
                if limit_state.evaluate(&x)? <= 0.0 {
                    failures += 1;
                }
            }
            Ok(failures)
        })
        .collect::<Result<_, _>>()?;
    let failures: u64 = counts.iter().sum();
    let n = config.total_samples as f64;
    let p_f = failures as f64 / n;
    Ok(CrudeMcResult {
        p_f,
        standard_error: (p_f * (1.0 - p_f) / n).sqrt(),
        failures,
        total_samples: config.total_samples,
    })
}

// ---------------------------------------------------------------------------
// sequential importance sampling, single proposal
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SsIsConfig {
    /// Samples drawn per threshold level.
    pub samples_per_level: usize,
    /// Level quantile: each threshold is the `floor(rho K)`-th smallest
    /// performance of the level's batch.
    pub quantile: f64,
    /// Fixed proposal scale; the covariance never adapts.
    pub sigma: f64,
    pub max_levels: usize,
}

impl SsIsConfig {
    pub fn new(samples_per_level: usize) -> Self {
        Self { samples_per_level, quantile: 0.1, sigma: 1.0, max_levels: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsIsLevel {
    pub threshold: f64,
    /// The probability factor this level contributed to the product.
    pub conditional_factor: f64,
    /// Proposal mean the level sampled from.
    pub proposal_mean: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsIsResult {
    pub p_f: f64,
    pub levels: Vec<SsIsLevel>,
    pub performance_calls: u64,
    /// False when the threshold ladder never reached 0 within `max_levels`;
    /// `p_f` is then only the probability of the deepest region reached.
    pub converged: bool,
}

/// Single-proposal sequential importance sampler.
///
/// Each level draws from `N(mu_t, sigma^2 I)`, lowers the threshold to the
/// batch's `rho`-quantile (clamped at 0) and relocates the mean to the
/// in-region sample of highest target density. The failure probability is
/// the final level's importance-weighted region mass — the product of
/// plugged-in conditional probabilities telescopes into it — so estimate
/// quality rests entirely on how well the last relocated proposal covers
/// the failure region, which is this method's characteristic weakness once
/// relocation noise grows with dimension.
pub fn ss_is<R: Rng + ?Sized>(
    config: &SsIsConfig,
    limit_state: &LimitState,
    rng: &mut R,
) -> Result<SsIsResult, BaselineError> {
    if config.samples_per_level == 0 {
        return Err(BaselineError::InvalidConfig(
            "samples_per_level must be at least 1".into(),
        ));
    }
    if !(config.quantile > 0.0 && config.quantile < 1.0) {
        return Err(BaselineError::InvalidConfig(format!(
            "quantile must lie in (0, 1), got {}",
            config.quantile
        )));
    }
    if !(config.sigma > 0.0) {
        return Err(BaselineError::InvalidConfig(format!(
            "sigma must be positive, got {}",
            config.sigma
        )));
    }
    if config.max_levels == 0 {
        return Err(BaselineError::InvalidConfig(
            "max_levels must be at least 1".into(),
        ));
    }

    let dim = limit_state.dim();
    let target = limit_state.target();
    let evaluator = CountingEvaluator::new(limit_state);
    let k = config.samples_per_level;

    let mut mean = Vector::zeros(dim);
    let mut b_prev = f64::INFINITY;
    let mut region_mass = 0.0f64;
    let mut levels: Vec<SsIsLevel> = Vec::new();
    let mut converged = false;

    for level in 1..=config.max_levels {
        let proposal = ProposalParams::isotropic(mean.clone(), config.sigma);
        let points = numkernel::mvn_sample(rng, &proposal, k)?;
        let mut perfs = Vec::with_capacity(k);
        for x in &points {
            perfs.push(evaluator.evaluate(x)?);
        }

        let mut sorted = perfs.clone();
        sorted.sort_by(f64::total_cmp);
        let idx = (((config.quantile * k as f64).floor() as usize).max(1)).min(k);
        let raw = sorted[idx - 1];
        let b_t = if raw <= 0.0 { 0.0 } else { raw };

        let in_prev: Vec<usize> = (0..k).filter(|&i| perfs[i] <= b_prev).collect();
        let in_cur: Vec<usize> = (0..k).filter(|&i| perfs[i] <= b_t).collect();
        if in_prev.is_empty() || in_cur.is_empty() {
            return Err(BaselineError::NoFailureSamples { level });
        }

        // Each level's weighted region mass (1/K) sum u 1{S <= b_t} directly
        // estimates the unconditional probability of the nested event: the
        // conditional-probability product telescopes because every plugged-in
        // conditional is the current level's region mass over the previous
        // estimate. The trace still reports the per-level conditional ratio
        // (current-region mass over previous-region mass, both under the
        // current proposal), which reduces to the plain subset fraction at
        // the first level where the proposal equals the target.
        let log_q = numkernel::mvn_logpdf_batch(&points, &proposal)?;
        let log_u: Vec<f64> = points
            .iter()
            .zip(&log_q)
            .map(|(x, lq)| target.log_density(x) - lq)
            .collect();
        let num: Vec<f64> = in_cur.iter().map(|&i| log_u[i]).collect();
        let den: Vec<f64> = in_prev.iter().map(|&i| log_u[i]).collect();
        let factor = (numkernel::log_sum_exp(&num)? - numkernel::log_sum_exp(&den)?).exp();
        region_mass = (numkernel::log_sum_exp(&num)? - (k as f64).ln()).exp();
        levels.push(SsIsLevel {
            threshold: b_t,
            conditional_factor: factor,
            proposal_mean: mean.clone(),
        });

        if b_t == 0.0 {
            converged = true;
            break;
        }

        // relocate to the in-region sample of highest target density
        let best = in_cur
            .iter()
            .copied()
            .max_by(|&a, &b| {
                target
                    .log_density(&points[a])
                    .total_cmp(&target.log_density(&points[b]))
                    .then(b.cmp(&a)) // ties to the lowest index
            })
            .expect("in_cur checked non-empty");
        mean = points[best].clone();
        b_prev = b_t;
    }

    Ok(SsIsResult {
        p_f: region_mass,
        levels,
        performance_calls: evaluator.calls(),
        converged,
    })
}

// ---------------------------------------------------------------------------
// cross-entropy population Monte Carlo (mixture, no reassignment)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CePmcConfig {
    pub n_proposals: usize,
    pub samples_per_proposal: usize,
    /// Pooled threshold quantile.
    pub quantile: f64,
    /// Extra iterations after the threshold first reaches 0.
    pub refine_iterations: usize,
    pub max_iterations: usize,
    pub init: ProposalInit,
    pub initial_sigma: f64,
}

impl CePmcConfig {
    pub fn new(n_proposals: usize, samples_per_proposal: usize) -> Self {
        Self {
            n_proposals,
            samples_per_proposal,
            quantile: 0.1,
            refine_iterations: 25,
            max_iterations: 100,
            init: ProposalInit::UniformBox { lo: -4.0, hi: 4.0 },
            initial_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CePmcResult {
    /// Mixture-weighted failure estimate from the last iteration's batch.
    pub p_f: f64,
    pub iterations: usize,
    pub performance_calls: u64,
    /// Whether the threshold reached 0 before the iteration cap.
    pub converged: bool,
    /// True when adaptation was cut short by a numerically degenerate
    /// mixture; `p_f` is the last finite estimate.
    pub degenerate: bool,
    /// Failure-region points of the final batch (mode-coverage diagnostics).
    pub final_failure_points: Vec<Vector>,
}

/// Cross-entropy / population Monte Carlo with a Gaussian mixture.
///
/// Thresholds come from the pooled `rho`-quantile of the whole batch,
/// monotonically clamped; the whole mixture then refits to the
/// importance-weighted moments of the pooled in-region batch (no shrinkage
/// or tempering), every component receiving the same parameters. Nothing
/// ties samples to components, so the population behaves like a single
/// adaptive Gaussian: on multimodal failure domains it contracts onto the
/// dominant design points and underrepresents the rest. After the threshold
/// reaches 0 the mixture keeps refining for `refine_iterations` more passes
/// and the final batch yields the mixture-weighted failure estimate.
pub fn ce_pmc<R: Rng + ?Sized>(
    config: &CePmcConfig,
    limit_state: &LimitState,
    rng: &mut R,
) -> Result<CePmcResult, BaselineError> {
    let n = config.n_proposals;
    let k = config.samples_per_proposal;
    if n == 0 || k == 0 {
        return Err(BaselineError::InvalidConfig(
            "n_proposals and samples_per_proposal must be at least 1".into(),
        ));
    }
    if !(config.quantile > 0.0 && config.quantile < 1.0) {
        return Err(BaselineError::InvalidConfig(format!(
            "quantile must lie in (0, 1), got {}",
            config.quantile
        )));
    }
    if config.max_iterations == 0 {
        return Err(BaselineError::InvalidConfig(
            "max_iterations must be at least 1".into(),
        ));
    }
    if !(config.initial_sigma > 0.0) {
        return Err(BaselineError::InvalidConfig(format!(
            "initial_sigma must be positive, got {}",
            config.initial_sigma
        )));
    }

    let dim = limit_state.dim();
    let target = limit_state.target();
    let evaluator = CountingEvaluator::new(limit_state);

    let mut params: Vec<ProposalParams> = match &config.init {
        ProposalInit::Explicit(means) => {
            if means.len() != n {
                return Err(BaselineError::InvalidConfig(format!(
                    "init supplies {} means for {n} proposals",
                    means.len()
                )));
            }
            for m in means {
                if m.len() != dim {
                    return Err(BaselineError::InvalidConfig(format!(
                        "init mean dimension {} does not match benchmark dimension {dim}",
                        m.len()
                    )));
                }
            }
            means
                .iter()
                .map(|m| ProposalParams::isotropic(m.clone(), config.initial_sigma))
                .collect()
        }
        ProposalInit::UniformBox { lo, hi } => {
            if !(lo < hi) {
                return Err(BaselineError::InvalidConfig(format!(
                    "init box [{lo}, {hi}] is empty"
                )));
            }
            (0..n)
                .map(|_| {
                    let mean = Vector::from_fn(dim, |_, _| rng.random_range(*lo..=*hi));
                    ProposalParams::isotropic(mean, config.initial_sigma)
                })
                .collect()
        }
    };

    let mut b_prev = f64::INFINITY;
    let mut estimate = f64::NAN;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut degenerate = false;
    let mut refine_left = config.refine_iterations;
    let mut final_failure_points: Vec<Vector> = Vec::new();

    for t in 1..=config.max_iterations {
        let mixture = match MixtureProposal::new(params.clone()) {
            Ok(m) => m,
            Err(_) if iterations > 0 => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let mut points: Vec<Vector> = Vec::with_capacity(n * k);
        let mut draw_failed = false;
        for p in &params {
            match numkernel::mvn_sample(rng, p, k) {
                Ok(batch) => points.extend(batch),
                Err(NumError::NotPositiveDefinite { .. }) if iterations > 0 => {
                    draw_failed = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if draw_failed {
            degenerate = true;
            break;
        }
        let mut perfs = Vec::with_capacity(n * k);
        for x in &points {
            perfs.push(evaluator.evaluate(x)?);
        }
        iterations = t;

        // pooled monotone threshold, clamped at the failure boundary
        let mut sorted = perfs.clone();
        sorted.sort_by(f64::total_cmp);
        let idx = (((config.quantile * (n * k) as f64).floor() as usize).max(1)).min(n * k);
        let b_t = sorted[idx - 1].min(b_prev).max(0.0);

        // mixture importance weights over the full batch
        let per_component = mixture.component_log_pdfs(&points)?;
        let log_mix = isw::mixture_log_density_from_parts(&per_component, points.len());
        let log_w: Vec<f64> = points
            .iter()
            .zip(&log_mix)
            .map(|(x, lm)| target.log_density(x) - lm)
            .collect();
        // unnormalised mixture-weight estimate: the target density is fully
        // normalised, so dividing by the batch size keeps the estimator
        // unbiased; a self-normalising denominator would collapse once every
        // component adapts into the failure region (no bulk coverage left)
        let failure_logs: Vec<f64> = (0..points.len())
            .filter(|&i| perfs[i] <= 0.0)
            .map(|i| log_w[i])
            .collect();
        estimate = if failure_logs.is_empty() {
            0.0
        } else {
            (numkernel::log_sum_exp(&failure_logs)? - ((n * k) as f64).ln()).exp()
        };
        final_failure_points = (0..points.len())
            .filter(|&i| perfs[i] <= 0.0)
            .map(|i| points[i].clone())
            .collect();

        // one pooled moment refit shared by every component: with no sample
        // ownership (nothing is reassigned), the cross-entropy problem sees
        // only the global in-region batch, so the whole mixture contracts to
        // a single adaptive Gaussian — the diversity loss this baseline is
        // meant to exhibit on multimodal failure domains
        let in_region: Vec<usize> = (0..points.len()).filter(|&i| perfs[i] <= b_t).collect();
        if !in_region.is_empty() {
            let sub_points: Vec<Vector> = in_region.iter().map(|&i| points[i].clone()).collect();
            let sub_logs: Vec<f64> = in_region.iter().map(|&i| log_w[i]).collect();
            match isw::normalize_log_weights(&sub_logs) {
                Ok(weights) => {
                    let mean_new = numkernel::weighted_mean(&sub_points, &weights)?;
                    let mut cov_new =
                        numkernel::weighted_covariance(&sub_points, &weights, &mean_new)?;
                    if cholesky(&cov_new).is_err() {
                        let jitter =
                            JITTER_SCALE * cov_new.trace().max(f64::MIN_POSITIVE) / dim as f64;
                        cov_new += Matrix::identity(dim, dim) * jitter;
                    }
                    if cholesky(&cov_new).is_ok() {
                        let fitted = ProposalParams::new(mean_new, cov_new);
                        params = vec![fitted; n];
                    }
                }
                // every in-region weight underflowed: keep the current mixture
                Err(IswError::AllImpossible) => {}
                Err(e) => return Err(e.into()),
            }
        }

        if b_t == 0.0 {
            if !converged {
                converged = true;
            } else if refine_left == 0 {
                break;
            } else {
                refine_left -= 1;
            }
        }
        b_prev = b_t;
    }

    if !estimate.is_finite() {
        return Err(BaselineError::NoFailureSamples { level: iterations.max(1) });
    }
    Ok(CePmcResult {
        p_f: estimate,
        iterations,
        performance_calls: evaluator.calls(),
        converged,
        degenerate,
        final_failure_points,
    })
}
