//! Datasets and their division across agents.

mod idx;
mod partition;
mod synthetic;

pub use idx::load_idx;
pub use partition::{
    apply_concept_shift, partition_by_shift, partition_hash, shifted_template, AgentDataBundle,
    Distribution, PartitionSpec,
};
pub use synthetic::generate_synthetic;

use crate::error::{Error, Result};
use crate::model::MiniBatch;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                context: "dataset features",
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(LabeledDataset {
            features,
            labels,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn as_batch(&self) -> Result<MiniBatch<'_>> {
        MiniBatch::new(&self.features, &self.labels, self.input_dim)
    }

    /// Copies the given rows, in order, into a new dataset.
    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(rows.len() * self.input_dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        LabeledDataset {
            features,
            labels,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.labels
    }
}

/// Reusable gather buffer for shuffled mini-batches.
#[derive(Debug, Default, Clone)]
pub(crate) struct BatchBuffer {
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl BatchBuffer {
    pub(crate) fn gather<'a>(
        &'a mut self,
        data: &LabeledDataset,
        rows: &[usize],
    ) -> Result<MiniBatch<'a>> {
        self.features.clear();
        self.labels.clear();
        for &r in rows {
            self.features.extend_from_slice(data.row(r));
            self.labels.push(data.labels[r]);
        }
        MiniBatch::new(&self.features, &self.labels, data.input_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(LabeledDataset::new(vec![0.0; 5], vec![0, 1], 2, 2).is_err());
        assert!(matches!(
            LabeledDataset::new(vec![0.0; 4], vec![0, 2], 2, 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn select_and_counts() {
        let d = LabeledDataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0, 1, 1], 2, 3).unwrap();
        let s = d.select(&[2, 0]);
        assert_eq!(s.labels(), &[1, 0]);
        assert_eq!(s.row(0), &[4.0, 5.0]);
        assert_eq!(d.class_counts(), vec![1, 2, 0]);
    }
}
