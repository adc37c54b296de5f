//! Benchmark performance functions and the standard-normal input model.
//!
//! A performance (limit-state) function `S` maps an input point to a scalar;
//! `S(x) <= 0` is failure. Four benchmarks are registered:
//!
//! * `s1` — two competing branches (an exponential ridge vs. a hyperbola),
//!   three disjoint failure regions, `d = 2`.
//! * `s2` — four-branch series system with two dominant design points, `d = 2`.
//! * `s3` — shifted two-dimensional Rastrigin surface: many small failure
//!   pockets scattered around the origin, `d = 2`.
//! * `s4` — linear diagonal margin `gamma - sum(x)/sqrt(d)`; any dimension,
//!   with exact failure probability `Phi(-gamma)`.
//!
//! Inputs are always distributed as a standard normal `N(0, I_d)`.

use std::cell::Cell;
use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::numkernel::{Vector, LN_2PI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitStateError {
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("dimension mismatch: benchmark expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}` for benchmark `{benchmark}`")]
    InvalidParameter { benchmark: String, name: String },
    #[error("benchmark `{0}` has a fixed dimension of 2")]
    FixedDimension(String),
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Two-branch performance function (`d = 2`).
pub fn eval_s1(x: &Vector, c: f64) -> Result<f64, LimitStateError> {
    expect_dim(x, 2)?;
    let (x1, x2) = (x[0], x[1]);
    let branch1 = c - 1.0 - x2 + (-x1 * x1 / 10.0).exp() + (x1 / 5.0).powi(4);
    let branch2 = c * c / 2.0 - x1 * x2;
    Ok(branch1.min(branch2))
}

/// The four branch expressions of the series system, before the min.
pub fn s2_branches(x: &Vector, a: f64, b: f64) -> Result<[f64; 4], LimitStateError> {
    expect_dim(x, 2)?;
    let (x1, x2) = (x[0], x[1]);
    let ridge = a + (x1 - x2) * (x1 - x2) / 10.0;
    Ok([
        ridge - (x1 + x2) / SQRT_2,
        ridge + (x1 + x2) / SQRT_2,
        (x1 - x2) + b / SQRT_2 + 1.0,
        (x2 - x1) + b / SQRT_2 + 1.0,
    ])
}

/// Four-branch series system (`d = 2`): minimum over [`s2_branches`].
pub fn eval_s2(x: &Vector, a: f64, b: f64) -> Result<f64, LimitStateError> {
    let br = s2_branches(x, a, b)?;
    Ok(br.into_iter().fold(f64::INFINITY, f64::min))
}

/// Shifted Rastrigin surface (`d = 2`).
pub fn eval_s3(x: &Vector) -> Result<f64, LimitStateError> {
    expect_dim(x, 2)?;
    let mut s = 10.0;
    for &xi in x.iter() {
        s -= xi * xi - 5.0 * (2.0 * std::f64::consts::PI * xi).cos();
    }
    Ok(s)
}

/// Linear diagonal margin in any dimension: `gamma - sum(x)/sqrt(d)`.
pub fn eval_s4(x: &Vector, gamma: f64) -> Result<f64, LimitStateError> {
    if x.is_empty() {
        return Err(LimitStateError::DimensionMismatch { expected: 1, got: 0 });
    }
    let d = x.len() as f64;
    Ok(gamma - x.iter().sum::<f64>() / d.sqrt())
}

fn expect_dim(x: &Vector, expected: usize) -> Result<(), LimitStateError> {
    if x.len() != expected {
        return Err(LimitStateError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    TwoBranch { c: f64 },
    FourBranch { a: f64, b: f64 },
    Rastrigin,
    LinearDiagonal { gamma: f64 },
}

/// A registered benchmark: evaluator, dimension, parameters and (when known)
/// a reference failure probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    name: String,
    dim: usize,
    kind: Kind,
    reference_pf: Option<f64>,
    params: BTreeMap<String, f64>,
}

impl LimitState {
    /// Look up a benchmark by registry key (`s1`..`s4`).
    ///
    /// `dim` only applies to `s4` (the others are fixed at 2). `overrides`
    /// replaces benchmark constants by name (`c`, `a`, `b`, `gamma`); the
    /// reference probability is dropped when an override moves a benchmark
    /// away from its calibrated constants (except `s4`, which is exact for
    /// any `gamma`).
    pub fn by_name(
        name: &str,
        dim: Option<usize>,
        overrides: &BTreeMap<String, f64>,
    ) -> Result<Self, LimitStateError> {
        let check_params = |allowed: &[&str]| -> Result<(), LimitStateError> {
            for key in overrides.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(LimitStateError::InvalidParameter {
                        benchmark: name.to_string(),
                        name: key.clone(),
                    });
                }
            }
            Ok(())
        };
        match name {
            "s1" => {
                check_params(&["c"])?;
                reject_dim_override(name, dim)?;
                let c = *overrides.get("c").unwrap_or(&3.0);
                let reference = if c == 3.0 { Some(3.48e-3) } else { None };
                Ok(Self::build(name, 2, Kind::TwoBranch { c }, reference, &[("c", c)]))
            }
            "s2" => {
                check_params(&["a", "b"])?;
                reject_dim_override(name, dim)?;
                let a = *overrides.get("a").unwrap_or(&4.0);
                let b = *overrides.get("b").unwrap_or(&7.0);
                let reference = if a == 4.0 && b == 7.0 { Some(6.4e-5) } else { None };
                Ok(Self::build(
                    name,
                    2,
                    Kind::FourBranch { a, b },
                    reference,
                    &[("a", a), ("b", b)],
                ))
            }
            "s3" => {
                check_params(&[])?;
                reject_dim_override(name, dim)?;
                // Tabulated reference. Deterministic quadrature of the
                // expression gives 7.2979e-2, ~0.7% lower; see the
                // workspace README's note on reference probabilities.
                Ok(Self::build(name, 2, Kind::Rastrigin, Some(7.349e-2), &[]))
            }
            "s4" => {
                check_params(&["gamma"])?;
                let gamma = *overrides.get("gamma").unwrap_or(&3.5);
                let d = dim.unwrap_or(2);
                if d == 0 {
                    return Err(LimitStateError::DimensionMismatch { expected: 1, got: 0 });
                }
                Ok(Self::build(
                    name,
                    d,
                    Kind::LinearDiagonal { gamma },
                    Some(normal_cdf(-gamma)),
                    &[("gamma", gamma)],
                ))
            }
            other => Err(LimitStateError::UnknownBenchmark(other.to_string())),
        }
    }

    fn build(
        name: &str,
        dim: usize,
        kind: Kind,
        reference_pf: Option<f64>,
        params: &[(&str, f64)],
    ) -> Self {
        Self {
            name: name.to_string(),
            dim,
            kind,
            reference_pf,
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Best-known failure probability, used as the accuracy reference.
    pub fn reference_pf(&self) -> Option<f64> {
        self.reference_pf
    }

    /// Evaluate the performance function; `<= 0` is failure.
    pub fn evaluate(&self, x: &Vector) -> Result<f64, LimitStateError> {
        match &self.kind {
            Kind::TwoBranch { c } => eval_s1(x, *c),
            Kind::FourBranch { a, b } => eval_s2(x, *a, *b),
            Kind::Rastrigin => eval_s3(x),
            Kind::LinearDiagonal { gamma } => {
                expect_dim(x, self.dim)?;
                eval_s4(x, *gamma)
            }
        }
    }

    /// The standard-normal input model matching this benchmark's dimension.
    pub fn target(&self) -> StandardNormalTarget {
        StandardNormalTarget::new(self.dim)
    }
}

fn reject_dim_override(name: &str, dim: Option<usize>) -> Result<(), LimitStateError> {
    match dim {
        None => Ok(()),
        Some(2) => Ok(()),
        Some(_) => Err(LimitStateError::FixedDimension(name.to_string())),
    }
}

/// Registry keys accepted by [`LimitState::by_name`].
pub fn benchmark_names() -> &'static [&'static str] {
    &["s1", "s2", "s3", "s4"]
}

fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal `N(0, I_d)` — the (normalised, Z = 1) target density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandardNormalTarget {
    dim: usize,
}

impl StandardNormalTarget {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "target dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_density(&self, x: &Vector) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        -0.5 * (self.dim as f64 * LN_2PI + x.norm_squared())
    }
}

/// Wraps a benchmark with a per-run evaluation counter. Single-run state;
/// each repetition owns its own counter.
pub struct CountingEvaluator<'a> {
    limit_state: &'a LimitState,
    calls: Cell<u64>,
}

impl<'a> CountingEvaluator<'a> {
    pub fn new(limit_state: &'a LimitState) -> Self {
        Self {
            limit_state,
            calls: Cell::new(0),
        }
    }

    pub fn evaluate(&self, x: &Vector) -> Result<f64, LimitStateError> {
        self.calls.set(self.calls.get() + 1);
        self.limit_state.evaluate(x)
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }

    pub fn limit_state(&self) -> &LimitState {
        self.limit_state
    }
}
