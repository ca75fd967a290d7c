//! Closed form and stationary solvers against independent oracles.

use std::sync::Arc;

use freqboost::analytic::expected_frequency;
use freqboost::chain::ChainModel;
use freqboost::learner::SourceDistribution;
use freqboost::stationary::{self, BirthDeath, Direct, GaussSeidel, SolverRegistry, SparseLu, StationarySolver};
use proptest::prelude::*;

/// Mean of `m / L` under weights `lambda^m`, summed directly. Weights are
/// scaled by the largest one so they stay finite.
fn geometric_mean(capacity: u32, nu: f64) -> f64 {
    let lambda = nu / (1.0 - nu);
    let peak = if lambda > 1.0 { capacity as i32 } else { 0 };
    let (mut num, mut den) = (0.0, 0.0);
    for m in 0..=capacity {
        let w = lambda.powi(m as i32 - peak);
        num += w * m as f64 / capacity as f64;
        den += w;
    }
    num / den
}

#[test]
fn small_capacity_values() {
    assert!((expected_frequency(2, 0.7) - 59.5 / 79.0).abs() < 1e-15);
    assert!((expected_frequency(10, 0.7) - 0.9250985568822886).abs() < 1e-13);
    assert!((expected_frequency(9, 0.57) - 0.7292683988175086).abs() < 1e-13);
}

#[test]
fn registry_lists_every_solver() {
    let names: Vec<_> = SolverRegistry::default().names().collect();
    assert_eq!(names, ["auto", "birth-death", "direct", "gauss-seidel", "power", "sparse-lu"]);
    assert!(SolverRegistry::default().get("qr").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_matches_geometric_sum(capacity in 2u32..300, nu in 0.05f64..0.95) {
        prop_assume!((nu - 0.5).abs() > 1e-3);
        let oracle = geometric_mean(capacity, nu);
        prop_assert!((expected_frequency(capacity, nu) - oracle).abs() < 1e-9);
    }

    #[test]
    fn closed_form_is_antisymmetric(capacity in 2u32..500, nu in 0.01f64..0.99) {
        let sum = expected_frequency(capacity, nu) + expected_frequency(capacity, 1.0 - nu);
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boosting_grows_with_capacity(capacity in 2u32..400, nu in 0.51f64..0.99) {
        let p = expected_frequency(capacity, nu);
        prop_assert!(p > nu);
        prop_assert!(expected_frequency(capacity + 1, nu) >= p - 1e-12);
    }

    #[test]
    fn two_form_solvers_agree(capacity in 2u32..60, nu in 0.05f64..0.95) {
        let chain = ChainModel::build(2, capacity, &SourceDistribution::binary(nu).unwrap()).unwrap();
        let reference = stationary::stationary_with(&chain, &BirthDeath).unwrap();
        let solvers: [Arc<dyn StationarySolver>; 2] = [Arc::new(Direct::default()), Arc::new(SparseLu)];
        for s in solvers {
            let pi = stationary::stationary_with(&chain, s.as_ref()).unwrap();
            for (a, b) in pi.pi.iter().zip(&reference.pi) {
                prop_assert!((a - b).abs() < 1e-10, "{}", s.name());
            }
        }
    }

    #[test]
    fn three_form_solvers_agree(capacity in 2u32..12, a in 0.05f64..0.9, b in 0.0f64..1.0) {
        let second = (1.0 - a) * b;
        let source = SourceDistribution::new(vec![a, second, 1.0 - a - second]).unwrap();
        let chain = ChainModel::build(3, capacity, &source).unwrap();
        let direct = stationary::stationary_with(&chain, &Direct::default()).unwrap();
        let sparse = stationary::stationary_with(&chain, &SparseLu).unwrap();
        let gs = stationary::stationary_with(&chain, &GaussSeidel::default()).unwrap();
        prop_assert!(direct.residual < 1e-12);
        for ((x, y), z) in direct.pi.iter().zip(&sparse.pi).zip(&gs.pi) {
            prop_assert!((x - y).abs() < 1e-10);
            prop_assert!((x - z).abs() < 1e-7);
        }
        let f: f64 = direct.expected_frequencies(&chain).iter().sum();
        prop_assert!((f - 1.0).abs() < 1e-10);
    }
}
