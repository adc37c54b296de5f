//! Numerical primitives shared by the samplers: SPD Cholesky factorisation,
//! multivariate normal sampling and log-densities, stable log-sum-exp, and
//! the weighted-moment / covariance-shrinkage estimators used by the
//! cross-entropy updates.
//!
//! All densities are handled in log space end to end; nothing in this module
//! exponentiates a log-density except behind a log-sum-exp guard.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Lower bound of the shrinkage-coefficient clamp.
pub const LW_BETA_FLOOR: f64 = 1e-8;

/// Relative jitter added on a failed factorisation before retrying once.
pub const JITTER_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("matrix of dimension {dim} is not positive definite")]
    NotPositiveDefinite { dim: usize },
    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("shrinkage denominator is zero (covariance has no eigenvalue dispersion)")]
    ZeroDenominator,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },
}

/// Mean and covariance of one Gaussian proposal component.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalParams {
    pub mean: Vector,
    pub covariance: Matrix,
}

impl ProposalParams {
    pub fn new(mean: Vector, covariance: Matrix) -> Self {
        assert_eq!(
            mean.len(),
            covariance.nrows(),
            "mean/covariance dimension mismatch"
        );
        assert_eq!(covariance.nrows(), covariance.ncols(), "covariance not square");
        Self { mean, covariance }
    }

    /// Isotropic component `N(mean, sigma^2 I)`.
    pub fn isotropic(mean: Vector, sigma: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            covariance: Matrix::identity(d, d) * (sigma * sigma),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^T = m`.
pub fn cholesky(m: &Matrix) -> Result<Matrix, NumError> {
    debug_assert_eq!(m.nrows(), m.ncols());
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.unpack())
        .ok_or(NumError::NotPositiveDefinite { dim: m.nrows() })
}

/// Cholesky with a single diagonal-jitter retry of `1e-8 * tr(m)/d * I`.
///
/// Returns the factor and whether jitter was needed. A second failure
/// propagates the error: the caller is holding a genuinely degenerate matrix.
pub fn cholesky_with_jitter(m: &Matrix) -> Result<(Matrix, bool), NumError> {
    match cholesky(m) {
        Ok(l) => Ok((l, false)),
        Err(_) => {
            let d = m.nrows();
            let jitter = JITTER_SCALE * m.trace() / d as f64;
            let repaired = m + Matrix::identity(d, d) * jitter;
            cholesky(&repaired).map(|l| (l, true))
        }
    }
}

fn log_det_from_factor(l: &Matrix) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Log-density of `N(mean, covariance)` at `x`.
pub fn mvn_logpdf(x: &Vector, p: &ProposalParams) -> Result<f64, NumError> {
    if x.len() != p.dim() {
        return Err(NumError::DimensionMismatch {
            expected: p.dim(),
            got: x.len(),
        });
    }
    let l = cholesky(&p.covariance)?;
    let z = l
        .solve_lower_triangular(&(x - &p.mean))
        .expect("triangular solve after successful factorisation");
    let d = x.len() as f64;
    Ok(-0.5 * (d * LN_2PI + log_det_from_factor(&l) + z.norm_squared()))
}

/// Log-densities of one component at many points, factorising once.
///
/// Matches [`mvn_logpdf`] elementwise; this is the hot path for the
/// mixture-weight computations.
pub fn mvn_logpdf_batch(points: &[Vector], p: &ProposalParams) -> Result<Vec<f64>, NumError> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let d = p.dim();
    for x in points {
        if x.len() != d {
            return Err(NumError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    let l = cholesky(&p.covariance)?;
    let log_det = log_det_from_factor(&l);
    let mut centered = Matrix::zeros(d, points.len());
    for (j, x) in points.iter().enumerate() {
        centered.column_mut(j).copy_from(&(x - &p.mean));
    }
    l.solve_lower_triangular_mut(&mut centered);
    let base = -0.5 * (d as f64 * LN_2PI + log_det);
    Ok(centered
        .column_iter()
        .map(|col| base - 0.5 * col.norm_squared())
        .collect())
}

/// Draw `count` samples `mean + L z`, `z ~ N(0, I)`.
///
/// Coordinates are consumed from the stream in a fixed order, so a given
/// generator state yields bit-identical draws.
pub fn mvn_sample<R: Rng + ?Sized>(
    rng: &mut R,
    p: &ProposalParams,
    count: usize,
) -> Result<Vec<Vector>, NumError> {
    let l = cholesky(&p.covariance)?;
    let d = p.dim();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        out.push(&p.mean + &l * z);
    }
    Ok(out)
}

/// `ln(sum exp(x_i))`, stable under large negative magnitudes.
///
/// Returns `-inf` when every term is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64, NumError> {
    if values.is_empty() {
        return Err(NumError::EmptyInput { what: "log_sum_exp" });
    }
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + sum.ln())
}

fn check_weights(points: &[Vector], weights: &[f64]) -> Result<f64, NumError> {
    if points.is_empty() {
        return Err(NumError::EmptyInput { what: "weighted moments" });
    }
    if points.len() != weights.len() {
        return Err(NumError::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(NumError::InvalidWeight { index: i, value: w });
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(NumError::AllZeroWeights);
    }
    Ok(total)
}

/// Self-normalised weighted mean `sum(w x) / sum(w)`.
pub fn weighted_mean(points: &[Vector], weights: &[f64]) -> Result<Vector, NumError> {
    let total = check_weights(points, weights)?;
    let d = points[0].len();
    let mut acc = Vector::zeros(d);
    for (x, &w) in points.iter().zip(weights) {
        acc.axpy(w, x, 1.0);
    }
    Ok(acc / total)
}

/// Self-normalised weighted scatter about an explicit `center`:
/// `sum(w (x-c)(x-c)^T) / sum(w)`.
///
/// The result is exactly symmetric by construction (the lower triangle is
/// accumulated and mirrored).
pub fn weighted_covariance(
    points: &[Vector],
    weights: &[f64],
    center: &Vector,
) -> Result<Matrix, NumError> {
    let total = check_weights(points, weights)?;
    let d = points[0].len();
    if center.len() != d {
        return Err(NumError::DimensionMismatch {
            expected: d,
            got: center.len(),
        });
    }
    let mut acc = Matrix::zeros(d, d);
    for (x, &w) in points.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let c = x - center;
        for j in 0..d {
            for i in j..d {
                acc[(i, j)] += w * c[i] * c[j];
            }
        }
    }
    acc /= total;
    for j in 0..d {
        for i in (j + 1)..d {
            acc[(j, i)] = acc[(i, j)];
        }
    }
    Ok(acc)
}

/// Dispersion-based shrinkage coefficient for a covariance estimate.
///
/// `beta = sum_k ||x_k x_k^T - S||_F^2 / (K^2 (tr(S^2) - tr(S)^2 / d))`,
/// clamped to `[1e-8, 1]`. The denominator vanishes exactly when `S` is
/// isotropic (every eigenvalue equal, which includes all of `d = 1`); that is
/// reported as [`NumError::ZeroDenominator`] so the caller can pin `beta = 1`.
pub fn lw_shrinkage_coefficient(samples: &[Vector], s_hat: &Matrix) -> Result<f64, NumError> {
    lw_shrinkage_impl(samples, None, s_hat)
}

/// Variant of [`lw_shrinkage_coefficient`] with the sample outer products
/// centered at `center` before comparison against `s_hat`.
pub fn lw_shrinkage_coefficient_centered(
    samples: &[Vector],
    center: &Vector,
    s_hat: &Matrix,
) -> Result<f64, NumError> {
    lw_shrinkage_impl(samples, Some(center), s_hat)
}

fn lw_shrinkage_impl(
    samples: &[Vector],
    center: Option<&Vector>,
    s_hat: &Matrix,
) -> Result<f64, NumError> {
    if samples.is_empty() {
        return Err(NumError::EmptyInput { what: "lw_shrinkage_coefficient" });
    }
    let d = s_hat.nrows();
    for x in samples {
        if x.len() != d {
            return Err(NumError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    let k = samples.len() as f64;
    let tr = s_hat.trace();
    let tr_sq = (s_hat * s_hat).trace();
    let denom = k * k * (tr_sq - tr * tr / d as f64);
    if denom <= 0.0 {
        return Err(NumError::ZeroDenominator);
    }
    let mut num = 0.0;
    for x in samples {
        let c = match center {
            Some(mu) => x - mu,
            None => x.clone(),
        };
        for j in 0..d {
            for i in 0..d {
                let diff = c[i] * c[j] - s_hat[(i, j)];
                num += diff * diff;
            }
        }
    }
    Ok((num / denom).clamp(LW_BETA_FLOOR, 1.0))
}

/// Convex-plus-trace covariance blend:
/// `(1-beta) prev + beta s_hat + eta (tr(s_hat)/d) I`.
///
/// The trace term keeps the result positive definite even when `s_hat` is
/// rank-deficient, provided `eta > 0` and `tr(s_hat) > 0`.
pub fn shrink_covariance(prev: &Matrix, s_hat: &Matrix, beta: f64, eta: f64) -> Matrix {
    debug_assert!((0.0..=1.0).contains(&beta), "beta out of range: {beta}");
    debug_assert!(eta >= 0.0, "eta negative: {eta}");
    let d = prev.nrows();
    let iso = s_hat.trace() / d as f64;
    prev * (1.0 - beta) + s_hat * beta + Matrix::identity(d, d) * (eta * iso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::from_vec(vec![a, b])
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky(&Matrix::identity(3, 3)).unwrap();
        assert_relative_eq!(l, Matrix::identity(3, 3), epsilon = 1e-14);
        let l = cholesky(&Matrix::from_diagonal(&vec2(4.0, 9.0))).unwrap();
        assert_relative_eq!(l, Matrix::from_diagonal(&vec2(2.0, 3.0)), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_reconstructs_dense_spd() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let l = cholesky(&m).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-12);
        // factor is lower triangular
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues 3, -1
        assert_eq!(cholesky(&m), Err(NumError::NotPositiveDefinite { dim: 2 }));
    }

    #[test]
    fn jitter_retry_repairs_semidefinite() {
        // rank-1 PSD matrix: plain factorisation fails, jitter succeeds
        let v = vec2(1.0, 2.0);
        let m = &v * v.transpose();
        assert!(cholesky(&m).is_err());
        let (l, jittered) = cholesky_with_jitter(&m).unwrap();
        assert!(jittered);
        let back = &l * l.transpose();
        assert_relative_eq!(back, m, epsilon = 1e-6);
    }

    #[test]
    fn logpdf_standard_normal_values() {
        // frozen: -0.5 ln(2 pi) and -ln(2 pi)
        let p1 = ProposalParams::isotropic(Vector::zeros(1), 1.0);
        assert_relative_eq!(
            mvn_logpdf(&Vector::zeros(1), &p1).unwrap(),
            -0.9189385332046727,
            max_relative = 1e-15
        );
        let p2 = ProposalParams::isotropic(Vector::zeros(2), 1.0);
        assert_relative_eq!(
            mvn_logpdf(&Vector::zeros(2), &p2).unwrap(),
            -1.8378770664093453,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            mvn_logpdf(&vec2(1.0, 1.0), &p2).unwrap(),
            -1.8378770664093453 - 1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn logpdf_batch_matches_scalar() {
        let p = ProposalParams::new(
            vec2(0.5, -1.0),
            Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        );
        let pts: Vec<Vector> = (0..7)
            .map(|i| vec2(i as f64 * 0.3 - 1.0, 0.8 - i as f64 * 0.2))
            .collect();
        let batch = mvn_logpdf_batch(&pts, &p).unwrap();
        for (x, &b) in pts.iter().zip(&batch) {
            assert_relative_eq!(b, mvn_logpdf(x, &p).unwrap(), max_relative = 1e-13);
        }
    }

    #[test]
    fn logpdf_integrates_to_one_in_1d() {
        // trapezoid rule over +-12 sigma for sigma in {0.5, 1, 2}
        for &sigma in &[0.5, 1.0, 2.0] {
            let p = ProposalParams::isotropic(Vector::from_vec(vec![0.3]), sigma);
            let (lo, hi, n) = (0.3 - 12.0 * sigma, 0.3 + 12.0 * sigma, 48_000usize);
            let h = (hi - lo) / n as f64;
            let mut integral = 0.0;
            for i in 0..=n {
                let x = Vector::from_vec(vec![lo + i as f64 * h]);
                let f = mvn_logpdf(&x, &p).unwrap().exp();
                integral += if i == 0 || i == n { 0.5 * f } else { f };
            }
            integral *= h;
            assert!(
                (integral - 1.0).abs() < 1e-4,
                "density integral for sigma={sigma}: {integral}"
            );
        }
    }

    #[test]
    fn sample_tiny_covariance_sticks_to_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let p = ProposalParams::isotropic(vec2(3.0, -2.0), 1e-6);
        for x in mvn_sample(&mut rng, &p, 100).unwrap() {
            assert!((x - vec2(3.0, -2.0)).norm() < 1e-5);
        }
    }

    #[test]
    fn sample_moments_match_parameters() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = ProposalParams::new(vec2(1.0, -1.0), cov.clone());
        let n = 1_000_000usize;
        let samples = mvn_sample(&mut rng, &p, n).unwrap();
        let uniform = vec![1.0; n];
        let mean = weighted_mean(&samples, &uniform).unwrap();
        assert!((mean.clone() - vec2(1.0, -1.0)).amax() < 0.01, "mean {mean}");
        let emp = weighted_covariance(&samples, &uniform, &mean).unwrap();
        assert!((emp.clone() - cov).amax() < 0.02, "cov {emp}");
    }

    #[test]
    fn sample_is_deterministic_per_seed() {
        let p = ProposalParams::isotropic(vec2(0.0, 0.0), 1.0);
        let a = mvn_sample(&mut ChaCha12Rng::seed_from_u64(9), &p, 5).unwrap();
        let b = mvn_sample(&mut ChaCha12Rng::seed_from_u64(9), &p, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_sum_exp_values() {
        assert_relative_eq!(
            log_sum_exp(&[0.0, 0.0]).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            log_sum_exp(&[-1000.0, -1000.0]).unwrap(),
            -1000.0 + std::f64::consts::LN_2,
            max_relative = 1e-15
        );
        assert_eq!(log_sum_exp(&[3.7]).unwrap(), 3.7);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            log_sum_exp(&[]),
            Err(NumError::EmptyInput { what: "log_sum_exp" })
        );
    }

    #[test]
    fn weighted_mean_cases() {
        let pts = vec![vec2(0.0, 0.0), vec2(2.0, 0.0)];
        assert_relative_eq!(
            weighted_mean(&pts, &[1.0, 1.0]).unwrap(),
            vec2(1.0, 0.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            weighted_mean(&pts, &[0.0, 2.5]).unwrap(),
            vec2(2.0, 0.0),
            epsilon = 1e-15
        );
        assert_eq!(weighted_mean(&pts, &[0.0, 0.0]), Err(NumError::AllZeroWeights));
    }

    #[test]
    fn weighted_covariance_cases() {
        let single = vec![vec2(1.0, 2.0)];
        let z = weighted_covariance(&single, &[3.0], &vec2(1.0, 2.0)).unwrap();
        assert_eq!(z, Matrix::zeros(2, 2));

        let pts = vec![Vector::from_vec(vec![-1.0]), Vector::from_vec(vec![1.0])];
        let c = weighted_covariance(&pts, &[0.5, 0.5], &Vector::zeros(1)).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn weighted_covariance_is_exactly_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = ProposalParams::new(
            Vector::from_vec(vec![0.0, 1.0, -1.0]),
            Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 1.5]),
        );
        let pts = mvn_sample(&mut rng, &p, 500).unwrap();
        let w: Vec<f64> = (0..500).map(|i| 1.0 + (i % 7) as f64).collect();
        let c = weighted_covariance(&pts, &w, &p.mean).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[(i, j)].to_bits(), c[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn weighted_covariance_monte_carlo_consistency() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let cov = Matrix::from_diagonal(&vec2(1.0, 4.0));
        let p = ProposalParams::new(Vector::zeros(2), cov.clone());
        let pts = mvn_sample(&mut rng, &p, 100_000).unwrap();
        let w = vec![1.0; pts.len()];
        let c = weighted_covariance(&pts, &w, &Vector::zeros(2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let tol = 0.05 * cov[(i, i)].max(cov[(j, j)]);
                assert!(
                    (c[(i, j)] - cov[(i, j)]).abs() < tol,
                    "entry ({i},{j}) = {}",
                    c[(i, j)]
                );
            }
        }
    }

    #[test]
    fn lw_coefficient_frozen_rational_case() {
        // 10 identical samples (0.5, 0.5) against s_hat = diag(1, 0.5):
        // numerator = 10 * 0.75, denominator = 100 * 0.125, beta = 0.6 exactly.
        let samples = vec![vec2(0.5, 0.5); 10];
        let s_hat = Matrix::from_diagonal(&vec2(1.0, 0.5));
        assert_relative_eq!(
            lw_shrinkage_coefficient(&samples, &s_hat).unwrap(),
            0.6,
            max_relative = 1e-14
        );
    }

    #[test]
    fn lw_coefficient_zero_dispersion_clamps_to_floor() {
        // x x^T equals s_hat exactly for every sample -> numerator 0 -> floor
        let samples = vec![vec2(1.0, 2.0); 4];
        let s_hat = &vec2(1.0, 2.0) * vec2(1.0, 2.0).transpose();
        assert_eq!(
            lw_shrinkage_coefficient(&samples, &s_hat).unwrap(),
            LW_BETA_FLOOR
        );
    }

    #[test]
    fn lw_coefficient_isotropic_is_zero_denominator() {
        let samples = vec![vec2(1.0, 0.0)];
        assert_eq!(
            lw_shrinkage_coefficient(&samples, &(Matrix::identity(2, 2) * 0.7)),
            Err(NumError::ZeroDenominator)
        );
        // d = 1 is always isotropic
        let one = vec![Vector::from_vec(vec![2.0])];
        assert_eq!(
            lw_shrinkage_coefficient(&one, &Matrix::from_element(1, 1, 3.0)),
            Err(NumError::ZeroDenominator)
        );
    }

    #[test]
    fn lw_coefficient_matches_scalar_reference() {
        // independent reference: plain nested loops on Vec<Vec<f64>>
        fn reference(samples: &[Vec<f64>], s: &[Vec<f64>]) -> f64 {
            let d = s.len();
            let k = samples.len() as f64;
            let mut num = 0.0;
            for x in samples {
                for i in 0..d {
                    for j in 0..d {
                        let diff = x[i] * x[j] - s[i][j];
                        num += diff * diff;
                    }
                }
            }
            let mut tr = 0.0;
            let mut tr_sq = 0.0;
            for i in 0..d {
                tr += s[i][i];
                for j in 0..d {
                    tr_sq += s[i][j] * s[j][i];
                }
            }
            (num / (k * k * (tr_sq - tr * tr / d as f64))).clamp(1e-8, 1.0)
        }

        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let p = ProposalParams::new(Vector::zeros(2), Matrix::from_diagonal(&vec2(1.0, 3.0)));
        let pts = mvn_sample(&mut rng, &p, 200).unwrap();
        let w = vec![1.0; pts.len()];
        let s_hat = weighted_covariance(&pts, &w, &Vector::zeros(2)).unwrap();

        let raw: Vec<Vec<f64>> = pts.iter().map(|v| v.iter().cloned().collect()).collect();
        let s_raw: Vec<Vec<f64>> = (0..2)
            .map(|i| (0..2).map(|j| s_hat[(i, j)]).collect())
            .collect();
        assert_relative_eq!(
            lw_shrinkage_coefficient(&pts, &s_hat).unwrap(),
            reference(&raw, &s_raw),
            max_relative = 1e-12
        );
    }

    #[test]
    fn shrink_covariance_limits_and_frozen_case() {
        let prev = Matrix::identity(2, 2);
        let s_hat = Matrix::from_diagonal(&vec2(2.0, 4.0));
        // beta = 1, eta = 0: exactly s_hat
        assert_eq!(shrink_covariance(&prev, &s_hat, 1.0, 0.0), s_hat);
        // beta at the floor: essentially prev
        let near_prev = shrink_covariance(&prev, &s_hat, LW_BETA_FLOOR, 0.0);
        assert!((near_prev - &prev).amax() < 1e-7);
        // frozen rational case: 0.5 I + 0.5 diag(2,4) + 0.1 * 3 * I = diag(1.8, 2.8)
        let blended = shrink_covariance(&prev, &s_hat, 0.5, 0.1);
        assert_relative_eq!(
            blended,
            Matrix::from_diagonal(&vec2(1.8, 2.8)),
            max_relative = 1e-15
        );
    }

    #[test]
    fn shrink_covariance_floor_on_smallest_eigenvalue() {
        // with PSD prev and eta > 0 the result's smallest eigenvalue is at
        // least eta * tr(s_hat)/d (up to rounding)
        let v = vec2(1.0, -2.0);
        let prev = &v * v.transpose(); // rank-1 PSD
        let w = vec2(0.5, 0.25);
        let s_hat = &w * w.transpose(); // rank-1 PSD
        let eta = 0.05;
        let out = shrink_covariance(&prev, &s_hat, 0.3, eta);
        let min_eig = out
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let floor = eta * s_hat.trace() / 2.0;
        assert!(min_eig >= floor - 1e-12, "min eig {min_eig} < floor {floor}");
    }
}
