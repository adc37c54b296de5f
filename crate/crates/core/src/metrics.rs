//! Ensemble accuracy metrics for repeated estimator runs: relative RMSE
//! against a reference value, mean absolute log-error, and the coefficient
//! of variation of the estimates.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("metric received an empty set of estimates")]
    EmptyEstimates,
    #[error("reference probability must be positive and finite")]
    ZeroReference,
    #[error("all estimates are zero; log-error and CoV are undefined")]
    AllZeroEstimates,
    #[error("estimate mean is zero; CoV is undefined")]
    ZeroMean,
}

fn check_inputs(estimates: &[f64], reference: f64) -> Result<(), MetricsError> {
    if estimates.is_empty() {
        return Err(MetricsError::EmptyEstimates);
    }
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(MetricsError::ZeroReference);
    }
    Ok(())
}

/// Root-mean-square error relative to the reference:
/// `sqrt(mean((p_hat - p)^2)) / p`.
pub fn rrmse(estimates: &[f64], reference: f64) -> Result<f64, MetricsError> {
    check_inputs(estimates, reference)?;
    let mse = estimates
        .iter()
        .map(|e| (e - reference) * (e - reference))
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(mse.sqrt() / reference)
}

/// Mean absolute log-error `mean(|ln(p_hat / p)|)` over the *nonzero*
/// estimates, plus how many zero estimates were excluded.
///
/// A zero estimate has an infinite log-error; excluding it (and reporting the
/// exclusion) keeps the metric finite while still exposing degenerate runs.
pub fn male(estimates: &[f64], reference: f64) -> Result<(f64, usize), MetricsError> {
    check_inputs(estimates, reference)?;
    let nonzero: Vec<f64> = estimates.iter().copied().filter(|&e| e != 0.0).collect();
    let excluded = estimates.len() - nonzero.len();
    if nonzero.is_empty() {
        return Err(MetricsError::AllZeroEstimates);
    }
    let mean = nonzero
        .iter()
        .map(|e| (e / reference).ln().abs())
        .sum::<f64>()
        / nonzero.len() as f64;
    Ok((mean, excluded))
}

/// Coefficient of variation in percent: `100 * s / mean`, with `s` the
/// (n-1)-normalised sample standard deviation. Needs no reference value.
pub fn cov_percent(estimates: &[f64]) -> Result<f64, MetricsError> {
    if estimates.is_empty() {
        return Err(MetricsError::EmptyEstimates);
    }
    if estimates.len() < 2 {
        return Err(MetricsError::EmptyEstimates);
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);
    Ok(100.0 * var.sqrt() / mean)
}

/// A batch of repeated estimates of the same quantity, with every metric in
/// one place.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEnsemble {
    pub estimates: Vec<f64>,
    pub reference: f64,
}

/// Aggregated view of a [`RunEnsemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub repetitions: usize,
    pub mean: f64,
    pub rrmse: f64,
    pub male: f64,
    pub excluded_zero_count: usize,
    pub cov_percent: f64,
}

impl RunEnsemble {
    pub fn new(estimates: Vec<f64>, reference: f64) -> Self {
        Self { estimates, reference }
    }

    pub fn mean(&self) -> Result<f64, MetricsError> {
        if self.estimates.is_empty() {
            return Err(MetricsError::EmptyEstimates);
        }
        Ok(self.estimates.iter().sum::<f64>() / self.estimates.len() as f64)
    }

    pub fn summary(&self) -> Result<EnsembleSummary, MetricsError> {
        let (male, excluded) = male(&self.estimates, self.reference)?;
        Ok(EnsembleSummary {
            repetitions: self.estimates.len(),
            mean: self.mean()?,
            rrmse: rrmse(&self.estimates, self.reference)?,
            male,
            excluded_zero_count: excluded,
            cov_percent: cov_percent(&self.estimates)?,
        })
    }
}
