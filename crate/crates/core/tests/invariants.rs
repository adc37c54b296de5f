//! Cross-module invariants exercised through the public API: weight algebra,
//! hard reassignment, threshold ladders and covariance health on complete
//! runs. Everything here is deterministic (seeded or exhaustive) and the
//! whole file finishes in well under a minute.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sais_core::engine::{self, ProposalInit, SaisConfig, SaisResult};
use sais_core::isw::{self, MixtureProposal, WeightedSample};
use sais_core::limitstate::{LimitState, StandardNormalTarget};
use sais_core::numkernel::{self, Matrix, ProposalParams, Vector};

proptest! {
    /// Adding a constant to every log-value shifts the log-sum-exp by
    /// exactly that constant; the reduction must not lose this to overflow
    /// or cancellation anywhere in the tested range.
    #[test]
    fn log_sum_exp_is_shift_invariant(
        values in prop::collection::vec(-50.0f64..50.0, 1..40),
        shift in -500.0f64..500.0,
    ) {
        let base = numkernel::log_sum_exp(&values).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let moved = numkernel::log_sum_exp(&shifted).unwrap();
        prop_assert!(
            (moved - base - shift).abs() <= 1e-9,
            "shift by {shift} moved the log-sum-exp by {} instead",
            moved - base
        );
    }

    /// The effective sample size of any normalised weight vector lies in
    /// `[1, K]`: 1 when one weight carries everything, K when uniform.
    #[test]
    fn effective_sample_size_stays_within_bounds(
        log_weights in prop::collection::vec(-30.0f64..30.0, 1..200),
    ) {
        let weights = isw::normalize_log_weights(&log_weights).unwrap();
        let ess = isw::ess(&weights).unwrap();
        let k = log_weights.len() as f64;
        prop_assert!(
            (1.0 - 1e-9..=k + 1e-9).contains(&ess),
            "ess {ess} escaped [1, {k}]"
        );
    }

    /// With a single proposal the deterministic-mixture denominator is that
    /// proposal's own density, so the log-weights must coincide with plain
    /// importance-sampling weights `log pi - log q`.
    #[test]
    fn single_proposal_weights_reduce_to_plain_importance_sampling(
        (dim, raw_points, raw_mean, sigma) in (1usize..4).prop_flat_map(|d| (
            Just(d),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), 1..20),
            prop::collection::vec(-3.0f64..3.0, d),
            0.3f64..3.0,
        )),
    ) {
        let params = ProposalParams::new(
            Vector::from_vec(raw_mean),
            Matrix::identity(dim, dim) * sigma * sigma,
        );
        let points: Vec<Vector> = raw_points.into_iter().map(Vector::from_vec).collect();
        let mixture = MixtureProposal::new(vec![params.clone()]).unwrap();
        let target = StandardNormalTarget::new(dim);
        let dm = isw::dm_log_weights(&points, &mixture, &target).unwrap();
        for (x, &lw) in points.iter().zip(&dm) {
            let plain = target.log_density(x) - numkernel::mvn_logpdf(x, &params).unwrap();
            prop_assert!(
                (lw - plain).abs() <= 1e-12,
                "N=1 mixture weight {lw} differs from plain IS weight {plain}"
            );
        }
    }
}

/// Reassignment moves each selected sample onto exactly the component with
/// the highest responsibility (ties to the lowest index) and touches nothing
/// else in the batch.
#[test]
fn reassignment_is_one_hot_onto_the_most_responsible_component() {
    let dim = 2;
    let components = vec![
        ProposalParams::new(
            Vector::from_vec(vec![-3.0, 0.0]),
            Matrix::identity(dim, dim) * 0.8,
        ),
        ProposalParams::new(
            Vector::from_vec(vec![0.0, 3.0]),
            Matrix::identity(dim, dim) * 1.5,
        ),
        ProposalParams::new(
            Vector::from_vec(vec![3.0, 0.0]),
            Matrix::identity(dim, dim) * 0.8,
        ),
    ];
    let mixture = MixtureProposal::new(components.clone()).unwrap();
    let wide = ProposalParams::new(Vector::zeros(dim), Matrix::identity(dim, dim) * 9.0);
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let points = numkernel::mvn_sample(&mut rng, &wide, 120).unwrap();
    let mut samples: Vec<WeightedSample> = points
        .into_iter()
        .enumerate()
        .map(|(i, point)| WeightedSample {
            point,
            performance: 0.0,
            origin_proposal: i % 3,
            assigned_proposal: i % 3,
            log_weight: 0.0,
            normalized_weight: 0.0,
        })
        .collect();
    let before: Vec<usize> = samples.iter().map(|s| s.assigned_proposal).collect();
    let touched: Vec<usize> = (0..samples.len()).step_by(2).collect();

    engine::reassign_samples(&mut samples, &touched, &mixture).unwrap();

    assert_eq!(samples.len(), 120, "reassignment must not change the batch");
    for (i, sample) in samples.iter().enumerate() {
        if touched.contains(&i) {
            let mut best = 0usize;
            let mut best_val = f64::NEG_INFINITY;
            for (n, p) in components.iter().enumerate() {
                let v = numkernel::mvn_logpdf(&sample.point, p).unwrap();
                if v > best_val {
                    best_val = v;
                    best = n;
                }
            }
            assert_eq!(
                sample.assigned_proposal, best,
                "sample {i} landed on component {} instead of the argmax {best}",
                sample.assigned_proposal
            );
        } else {
            assert_eq!(
                sample.assigned_proposal, before[i],
                "sample {i} was not selected but its assignment changed"
            );
        }
        assert!(
            sample.assigned_proposal < components.len(),
            "assignment out of range"
        );
    }
}

fn trace_configs() -> Vec<(LimitState, SaisConfig)> {
    let none = BTreeMap::new();
    let mut out = Vec::new();
    for (name, dim, lo, hi) in [
        ("s1", None, -4.0, 4.0),
        ("s2", None, -4.0, 4.0),
        ("s4", Some(8), -1.0, 1.0),
    ] {
        let ls = LimitState::by_name(name, dim, &none).unwrap();
        let mut cfg = SaisConfig::new(4, 150);
        cfg.init = ProposalInit::UniformBox { lo, hi };
        out.push((ls, cfg));
    }
    out
}

fn traced_runs() -> Vec<SaisResult> {
    let mut runs = Vec::new();
    for (ls, cfg) in trace_configs() {
        for seed in 11..14 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            runs.push(engine::run_sais(&cfg, &ls, &mut rng).unwrap());
        }
    }
    runs
}

/// The threshold ladder strictly decreases until it clamps onto the target,
/// after which it never moves again; converged runs end exactly on the
/// target. Iteration estimates stay finite and non-negative throughout and
/// the recycling weights normalise over the realised iteration count.
#[test]
fn threshold_ladder_decreases_until_the_target_on_full_runs() {
    for run in traced_runs() {
        let thresholds: Vec<f64> = run.levels.iter().map(|l| l.threshold).collect();
        for pair in thresholds.windows(2) {
            assert!(
                pair[1] < pair[0] || pair[1] == 0.0,
                "ladder rose or stalled above the target: {pair:?}"
            );
        }
        if run.converged {
            assert_eq!(
                *thresholds.last().unwrap(),
                0.0,
                "converged run must finish on the target threshold"
            );
        }
        for level in &run.levels {
            assert!(
                level.intermediate_estimate.is_finite() && level.intermediate_estimate >= 0.0,
                "iteration {} produced estimate {}",
                level.t,
                level.intermediate_estimate
            );
        }
        assert_eq!(run.alpha_weights.len(), run.iterations_used);
        let total: f64 = run.alpha_weights.iter().sum();
        assert!(
            (total - 1.0).abs() <= 1e-12,
            "recycling weights sum to {total}"
        );
    }
}

/// Every proposal covariance left behind by an update must still admit a
/// Cholesky factorisation and be symmetric: the shrinkage blend plus trace
/// regulariser may never hand a broken matrix to the next iteration.
#[test]
fn covariances_stay_positive_definite_after_every_update() {
    for run in traced_runs() {
        for level in &run.levels {
            for (n, p) in level.proposal_params_after.iter().enumerate() {
                let scale = p.covariance.trace().abs().max(1e-300);
                let asym = (&p.covariance - p.covariance.transpose()).abs().max();
                assert!(
                    asym <= 1e-12 * scale,
                    "iteration {} proposal {n}: asymmetry {asym}",
                    level.t
                );
                assert!(
                    numkernel::cholesky(&p.covariance).is_ok(),
                    "iteration {} proposal {n}: covariance lost positive definiteness",
                    level.t
                );
            }
        }
    }
}

/// The forgetting weights form a normalised geometric sequence for any
/// factor and horizon: consecutive weights keep the exact ratio `lambda`
/// and the first weight equals the closed-form normaliser.
#[test]
fn recycling_weights_normalise_for_all_forgetting_factors() {
    for lambda in [0.1, 0.5, 0.9] {
        for t_total in [1usize, 5, 50] {
            let w = engine::recycling_weights(lambda, t_total);
            assert_eq!(w.len(), t_total);
            let total: f64 = w.iter().sum();
            assert!(
                (total - 1.0).abs() <= 1e-12,
                "lambda={lambda}, T={t_total}: weights sum to {total}"
            );
            for pair in w.windows(2) {
                assert!(
                    (pair[0] / pair[1] - lambda).abs() <= 1e-12,
                    "lambda={lambda}, T={t_total}: ratio {} drifted",
                    pair[0] / pair[1]
                );
            }
            let first = (1.0 - lambda) / (1.0 - lambda.powi(t_total as i32))
                * lambda.powi(t_total as i32 - 1);
            assert!(
                (w[0] - first).abs() <= 1e-15,
                "lambda={lambda}, T={t_total}: first weight {} vs closed form {first}",
                w[0]
            );
        }
    }
}
