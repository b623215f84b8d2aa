use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Isotropic Gaussian blobs, one per class.
///
/// Class means are standard-normal draws in `input_dim` dimensions; each row
/// is its class mean plus `spread`-scaled standard-normal noise. Rows are
/// emitted class by class, `per_class` rows each.
pub fn generate_synthetic(
    num_classes: usize,
    input_dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be at least 1".into()));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spread must be positive, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..input_dim).map(|_| normal()).collect())
        .collect();

    let mut features = Vec::with_capacity(num_classes * per_class * input_dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(mean.iter().map(|m| m + spread * normal()));
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, input_dim, num_classes)
}
