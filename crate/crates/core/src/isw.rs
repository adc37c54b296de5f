//! Deterministic-mixture importance weighting.
//!
//! Samples drawn from any component of a Gaussian mixture are weighted
//! against the whole mixture: `w(x) = pi(x) / ((1/N) sum_n q_n(x))`. Because
//! the standard-normal target is normalised (`Z = 1`), these weights are used
//! unnormalised for probability estimates; per-batch normalised weights feed
//! the adaptation machinery (effective sample size, tempering, moments).
//!
//! Everything is computed in log space.

use thiserror::Error;

use crate::limitstate::StandardNormalTarget;
use crate::numkernel::{self, NumError, ProposalParams, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IswError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("all samples have zero weight")]
    AllImpossible,
    #[error("mixture component {component}: {source}")]
    Component {
        component: usize,
        source: NumError,
    },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Equal-weight Gaussian mixture proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureProposal {
    components: Vec<ProposalParams>,
}

impl MixtureProposal {
    pub fn new(components: Vec<ProposalParams>) -> Result<Self, IswError> {
        if components.is_empty() {
            return Err(IswError::EmptyMixture);
        }
        let d = components[0].dim();
        for (i, c) in components.iter().enumerate() {
            if c.dim() != d {
                return Err(IswError::Component {
                    component: i,
                    source: NumError::DimensionMismatch {
                        expected: d,
                        got: c.dim(),
                    },
                });
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ProposalParams] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Per-component log-densities for a batch: `out[n][k] = log q_n(x_k)`.
    pub fn component_log_pdfs(&self, points: &[Vector]) -> Result<Vec<Vec<f64>>, IswError> {
        self.components
            .iter()
            .enumerate()
            .map(|(n, p)| {
                numkernel::mvn_logpdf_batch(points, p)
                    .map_err(|source| IswError::Component { component: n, source })
            })
            .collect()
    }

    /// Log mixture density `log((1/N) sum_n q_n(x))` per point.
    pub fn log_density(&self, points: &[Vector]) -> Result<Vec<f64>, IswError> {
        let per_component = self.component_log_pdfs(points)?;
        Ok(mixture_log_density_from_parts(&per_component, points.len()))
    }
}

/// Combine per-component log-densities into mixture log-densities.
pub(crate) fn mixture_log_density_from_parts(
    per_component: &[Vec<f64>],
    n_points: usize,
) -> Vec<f64> {
    let ln_n = (per_component.len() as f64).ln();
    let mut scratch = vec![0.0; per_component.len()];
    (0..n_points)
        .map(|k| {
            for (n, row) in per_component.iter().enumerate() {
                scratch[n] = row[k];
            }
            numkernel::log_sum_exp(&scratch).expect("non-empty mixture") - ln_n
        })
        .collect()
}

/// One drawn sample with its bookkeeping through an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub point: Vector,
    /// Performance value `S(point)`.
    pub performance: f64,
    /// Component the point was drawn from.
    pub origin_proposal: usize,
    /// Component the point currently belongs to (after reassignment).
    pub assigned_proposal: usize,
    /// Unnormalised deterministic-mixture log-weight.
    pub log_weight: f64,
    /// Weight normalised over the batch it was drawn in.
    pub normalized_weight: f64,
}

/// Deterministic-mixture log-weights for a batch of points:
/// `log w_k = log pi(x_k) - (log sum_n q_n(x_k) - ln N)`.
pub fn dm_log_weights(
    points: &[Vector],
    mixture: &MixtureProposal,
    target: &StandardNormalTarget,
) -> Result<Vec<f64>, IswError> {
    if points.is_empty() {
        return Err(IswError::EmptyBatch);
    }
    let log_mix = mixture.log_density(points)?;
    Ok(points
        .iter()
        .zip(log_mix)
        .map(|(x, lm)| target.log_density(x) - lm)
        .collect())
}

/// Exponentiate and normalise log-weights to sum to one.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>, IswError> {
    if log_weights.is_empty() {
        return Err(IswError::EmptyBatch);
    }
    let lse = numkernel::log_sum_exp(log_weights)?;
    if lse == f64::NEG_INFINITY {
        return Err(IswError::AllImpossible);
    }
    Ok(log_weights.iter().map(|lw| (lw - lse).exp()).collect())
}

/// Effective sample size `1 / sum(w_k^2)` of normalised weights.
///
/// Ranges from 1 (degenerate) to `K` (uniform).
pub fn ess(normalized_weights: &[f64]) -> Result<f64, IswError> {
    if normalized_weights.is_empty() {
        return Err(IswError::EmptyBatch);
    }
    debug_assert!(
        (normalized_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9,
        "weights not normalised"
    );
    let sum_sq: f64 = normalized_weights.iter().map(|w| w * w).sum();
    if sum_sq <= 0.0 {
        return Err(IswError::AllImpossible);
    }
    Ok(1.0 / sum_sq)
}

/// Sigmoid tempering exponent for iteration `t` (1-based).
pub fn tempering_gamma(t: usize) -> f64 {
    1.0 / (1.0 + (-(t as f64)).exp())
}

/// Flatten log-weights by the iteration-dependent exponent:
/// `log w* = gamma_t * log w`.
pub fn temper_log_weights(log_weights: &[f64], t: usize) -> Vec<f64> {
    let gamma = tempering_gamma(t);
    log_weights.iter().map(|lw| gamma * lw).collect()
}

/// Unnormalised-weight failure estimate for one batch:
/// `(1/|batch|) sum_k w_k 1{S(x_k) <= 0}`.
///
/// The divisor is the full batch size; safe samples contribute zero.
pub fn intermediate_failure_estimate(samples: &[WeightedSample]) -> Result<f64, IswError> {
    if samples.is_empty() {
        return Err(IswError::EmptyBatch);
    }
    let failure_logs: Vec<f64> = samples
        .iter()
        .filter(|s| s.performance <= 0.0)
        .map(|s| s.log_weight)
        .collect();
    if failure_logs.is_empty() {
        return Ok(0.0);
    }
    let lse = numkernel::log_sum_exp(&failure_logs)?;
    Ok((lse - (samples.len() as f64).ln()).exp())
}
