#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waffle_sim::model::{loss_and_gradient, MiniBatch, ModelSpec};
use waffle_sim::ParamVector;

pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-6;

/// A random small model, parameter vector and batch.
pub struct Instance {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Instance {
    pub fn random(seed: u64, mlp: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_dim = rng.random_range(1..=5);
        let num_classes = rng.random_range(2..=4);
        let spec = if mlp {
            let depth = rng.random_range(1..=2);
            let hidden = (0..depth).map(|_| rng.random_range(1..=4)).collect();
            ModelSpec::mlp(input_dim, hidden, num_classes)
        } else {
            ModelSpec::linear(input_dim, num_classes)
        };
        let params = ParamVector::from_vec(
            (0..spec.parameter_count())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        );
        let rows = rng.random_range(1..=6);
        let features = (0..rows * input_dim)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let labels = (0..rows).map(|_| rng.random_range(0..num_classes)).collect();
        Instance {
            spec,
            params,
            features,
            labels,
        }
    }

    pub fn batch(&self) -> MiniBatch<'_> {
        MiniBatch::new(&self.features, &self.labels, self.spec.input_dim).unwrap()
    }
}

/// Largest per-coordinate relative error between the analytic gradient and
/// central differences.
pub fn max_fd_error(inst: &Instance) -> f64 {
    let batch = inst.batch();
    let (_, grad) = loss_and_gradient(&inst.spec, &inst.params, &batch).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..inst.params.len() {
        let mut plus = inst.params.clone();
        plus.as_mut_slice()[j] += FD_STEP;
        let mut minus = inst.params.clone();
        minus.as_mut_slice()[j] -= FD_STEP;
        let lp = loss_and_gradient(&inst.spec, &plus, &batch).unwrap().0;
        let lm = loss_and_gradient(&inst.spec, &minus, &batch).unwrap().0;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let analytic = grad[j];
        let denom = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}
