mod common;

use proptest::prelude::*;
use waffle_sim::model::{init_params, loss_and_gradient, MiniBatch, ModelSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn linear_gradient_matches_finite_differences(seed in any::<u64>()) {
        let inst = common::Instance::random(seed, false);
        prop_assert!(common::max_fd_error(&inst) <= 1e-4);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences(seed in any::<u64>()) {
        let inst = common::Instance::random(seed, true);
        prop_assert!(common::max_fd_error(&inst) <= 1e-4);
    }

    #[test]
    fn loss_is_nonnegative_and_descends(seed in any::<u64>(), mlp in any::<bool>()) {
        let inst = common::Instance::random(seed, mlp);
        let batch = inst.batch();
        let (loss, grad) = loss_and_gradient(&inst.spec, &inst.params, &batch).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assume!(grad.norm() > 1e-8);
        let mut stepped = inst.params.clone();
        stepped.axpy(-1e-4, &grad);
        let (after, _) = loss_and_gradient(&inst.spec, &stepped, &batch).unwrap();
        prop_assert!(after < loss);
    }
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let spec = ModelSpec::mlp(3, vec![5], 4);
    let params = init_params(&spec, 9);
    let features: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
    let labels = vec![0, 1, 2, 3, 1];
    let batch = MiniBatch::new(&features, &labels, 3).unwrap();
    let (l1, g1) = loss_and_gradient(&spec, &params, &batch).unwrap();
    let (l2, g2) = loss_and_gradient(&spec, &params, &batch).unwrap();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert!(g1.iter().zip(g2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}
