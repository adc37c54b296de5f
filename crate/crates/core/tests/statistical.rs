//! Seeded end-to-end statistical checks of the sampler: calibration against
//! an analytic tail probability, bitwise reproducibility, the forgetting-
//! factor limit, and tracking on the scattered-pocket Rastrigin benchmark.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sais_core::engine::{self, ProposalInit, SaisConfig};
use sais_core::limitstate::LimitState;

/// `Phi(-3.5)`: the exact failure probability of the additive-tail
/// benchmark, frozen from the standard normal CDF.
const TAIL_REFERENCE: f64 = 2.326290790355250e-4;

fn tail_limit_state(dim: Option<usize>) -> LimitState {
    LimitState::by_name("s4", dim, &BTreeMap::new()).unwrap()
}

/// Even a small budget (N=2, K=500) must estimate the analytic tail within
/// 25% relative error in at least 90 of 100 seeded runs.
#[test]
fn small_budget_stays_calibrated_on_the_analytic_tail() {
    let ls = tail_limit_state(None);
    let mut cfg = SaisConfig::new(2, 500);
    cfg.quantile = 0.2;
    cfg.init = ProposalInit::UniformBox { lo: -1.0, hi: 1.0 };

    let mut within = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let run = engine::run_sais(&cfg, &ls, &mut rng).unwrap();
        let rel = (run.p_f_recycled - TAIL_REFERENCE).abs() / TAIL_REFERENCE;
        if rel <= 0.25 {
            within += 1;
        }
        worst = worst.max(rel);
    }
    assert!(
        within >= 90,
        "only {within}/100 runs landed within 25% of the tail reference \
         (worst relative error {worst:.3})"
    );
}

/// The same configuration and seed must reproduce the entire result
/// bit-for-bit — trace, estimates, weights and failure points — while a
/// different seed must actually change the answer.
#[test]
fn identical_seeds_reproduce_identical_results() {
    let ls = LimitState::by_name("s2", None, &BTreeMap::new()).unwrap();
    let cfg = SaisConfig::new(4, 150);

    let mut rng_a = ChaCha12Rng::seed_from_u64(4242);
    let mut rng_b = ChaCha12Rng::seed_from_u64(4242);
    let run_a = engine::run_sais(&cfg, &ls, &mut rng_a).unwrap();
    let run_b = engine::run_sais(&cfg, &ls, &mut rng_b).unwrap();
    assert_eq!(run_a, run_b, "same seed produced diverging results");

    let mut rng_c = ChaCha12Rng::seed_from_u64(4243);
    let run_c = engine::run_sais(&cfg, &ls, &mut rng_c).unwrap();
    assert_ne!(
        run_a.p_f_recycled, run_c.p_f_recycled,
        "different seeds produced the same estimate"
    );
}

/// As the forgetting factor vanishes the recycled estimator concentrates
/// all weight on the final iteration, matching it to 1e-6 relative.
#[test]
fn vanishing_forgetting_recovers_the_last_iteration_estimate() {
    let cases = [
        (
            LimitState::by_name("s1", None, &BTreeMap::new()).unwrap(),
            ProposalInit::UniformBox { lo: -4.0, hi: 4.0 },
        ),
        (
            tail_limit_state(None),
            ProposalInit::UniformBox { lo: -1.0, hi: 1.0 },
        ),
    ];
    for (ls, init) in cases {
        let mut cfg = SaisConfig::new(4, 200);
        cfg.forgetting = 1e-8;
        cfg.init = init;
        for seed in 21..24u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let run = engine::run_sais(&cfg, &ls, &mut rng).unwrap();
            let gap = (run.p_f_recycled - run.p_f_last_iteration).abs();
            assert!(
                gap <= 1e-6 * run.p_f_last_iteration.abs(),
                "{}: recycled {} vs last {} under vanishing forgetting",
                ls.name(),
                run.p_f_recycled,
                run.p_f_last_iteration
            );
        }
    }
}

/// On the scattered-pocket Rastrigin benchmark the mean recycled estimate
/// over 20 seeds tracks the true failure probability.
#[test]
fn rastrigin_mean_estimate_tracks_the_quadrature_value() {
    // P(s3 <= 0) by deterministic quadrature of the defining expression
    // (interval decomposition + normal-CDF differences, nominal error 1e-7),
    // cross-checked by a 1e9-sample Monte Carlo (7.29827e-2, se 8.2e-6).
    // The benchmark's stored reference constant is a tabulated value ~0.7%
    // above this; with a 15% tolerance either target works, but the test
    // should anchor on the independently derived number.
    let reference = 7.29793e-2;
    let ls = LimitState::by_name("s3", None, &BTreeMap::new()).unwrap();
    let cfg = SaisConfig::new(6, 200);

    let mut sum = 0.0;
    let runs = 20u64;
    for seed in 0..runs {
        let mut rng = ChaCha12Rng::seed_from_u64(600 + seed);
        sum += engine::run_sais(&cfg, &ls, &mut rng).unwrap().p_f_recycled;
    }
    let mean = sum / runs as f64;
    assert!(
        (mean - reference).abs() <= 0.15 * reference,
        "mean estimate {mean:.4e} drifted from reference {reference:.4e}"
    );
}
