//! Small differentiable classifiers.
//!
//! Both model kinds share one dense feed-forward implementation: a
//! linear-softmax model is a network with no hidden layers. Hidden layers use
//! `tanh`, which keeps the loss smooth enough for finite-difference checks.
//!
//! Parameters are laid out layer by layer, each layer as a row-major weight
//! matrix of shape `(out, in)` followed by its `out` biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSoftmax,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Ignored for [`ModelKind::LinearSoftmax`].
    pub hidden_dims: Vec<usize>,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LinearSoftmax,
            input_dim,
            num_classes,
            hidden_dims: Vec::new(),
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            num_classes,
            hidden_dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(
                "num_classes must be at least 2".into(),
            ));
        }
        if self.kind == ModelKind::Mlp && self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden layer widths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Widths of every layer, input first and logits last.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        if self.kind == ModelKind::Mlp {
            dims.extend_from_slice(&self.hidden_dims);
        }
        dims.push(self.num_classes);
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// A borrowed view of labeled rows.
#[derive(Debug, Clone, Copy)]
pub struct MiniBatch<'a> {
    features: &'a [f64],
    labels: &'a [usize],
    input_dim: usize,
}

impl<'a> MiniBatch<'a> {
    pub fn new(features: &'a [f64], labels: &'a [usize], input_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyData("mini-batch has no rows"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                context: "mini-batch features",
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        Ok(MiniBatch {
            features,
            labels,
            input_dim,
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

    pub fn labels(&self) -> &'a [usize] {
        self.labels
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// Draws weights uniformly from `[-1/√fan_in, 1/√fan_in]`; biases start at zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.parameter_count());
    for w in spec.layer_dims().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector::from_vec(values)
}

fn check_inputs(spec: &ModelSpec, params: &ParamVector, batch: &MiniBatch<'_>) -> Result<()> {
    params.check_len(spec.parameter_count(), "model parameters")?;
    if batch.input_dim() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            context: "batch input_dim",
            expected: spec.input_dim,
            got: batch.input_dim(),
        });
    }
    if let Some(&label) = batch.labels().iter().find(|&&l| l >= spec.num_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: spec.num_classes,
        });
    }
    Ok(())
}

/// Per-sample forward pass storing every layer's activation.
struct Forward {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    acts: Vec<Vec<f64>>,
}

impl Forward {
    fn new(spec: &ModelSpec) -> Self {
        let dims = spec.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let acts = dims.iter().map(|&d| vec![0.0; d]).collect();
        Forward {
            dims,
            offsets,
            acts,
        }
    }

    fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Fills `acts`; the last entry holds the logits.
    fn run(&mut self, params: &[f64], x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &params[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let b = &params[self.offsets[l] + n_in * n_out..self.offsets[l] + n_in * n_out + n_out];
            let (lower, upper) = self.acts.split_at_mut(l + 1);
            let input = &lower[l];
            let out = &mut upper[0];
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[j];
                out[j] = if l == last { z } else { z.tanh() };
            }
        }
    }

    fn logits(&self) -> &[f64] {
        &self.acts[self.layers()]
    }
}

/// Softmax probabilities written into `probs`; returns `log Σ exp(logits)`.
fn softmax_into(logits: &[f64], probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &MiniBatch<'_>,
) -> Result<(f64, ParamVector)> {
    check_inputs(spec, params, batch)?;
    let p = params.as_slice();
    let mut grad = vec![0.0; p.len()];
    let mut fwd = Forward::new(spec);
    let layers = fwd.layers();
    let mut probs = vec![0.0; spec.num_classes];
    let mut delta: Vec<f64> = Vec::new();
    let mut prev_delta: Vec<f64> = Vec::new();
    let mut loss = 0.0;

    for i in 0..batch.len() {
        let label = batch.labels()[i];
        fwd.run(p, batch.row(i));
        let lse = softmax_into(fwd.logits(), &mut probs);
        loss += lse - fwd.logits()[label];

        delta.clear();
        delta.extend_from_slice(&probs);
        delta[label] -= 1.0;

        for l in (0..layers).rev() {
            let (n_in, n_out) = (fwd.dims[l], fwd.dims[l + 1]);
            let off = fwd.offsets[l];
            let input = &fwd.acts[l];
            for j in 0..n_out {
                let dj = delta[j];
                let gw = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, a) in gw.iter_mut().zip(input) {
                    *g += dj * a;
                }
                grad[off + n_in * n_out + j] += dj;
            }
            if l > 0 {
                let w = &p[off..off + n_in * n_out];
                prev_delta.clear();
                prev_delta.resize(n_in, 0.0);
                for j in 0..n_out {
                    let dj = delta[j];
                    for (pd, wv) in prev_delta.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *pd += dj * wv;
                    }
                }
                for (pd, a) in prev_delta.iter_mut().zip(input) {
                    *pd *= 1.0 - a * a;
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
    }

    let n = batch.len() as f64;
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let grad = ParamVector::from_vec(grad);
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite("loss_and_gradient"));
    }
    Ok((loss, grad))
}

/// Argmax class for every row; ties go to the lowest class index.
pub fn predict(spec: &ModelSpec, params: &ParamVector, data: &MiniBatch<'_>) -> Result<Vec<usize>> {
    params.check_len(spec.parameter_count(), "model parameters")?;
    if data.input_dim() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            context: "data input_dim",
            expected: spec.input_dim,
            got: data.input_dim(),
        });
    }
    let mut fwd = Forward::new(spec);
    Ok((0..data.len())
        .map(|i| {
            fwd.run(params.as_slice(), data.row(i));
            argmax(fwd.logits())
        })
        .collect())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Fraction of rows whose predicted class equals the label.
pub fn predict_accuracy(spec: &ModelSpec, params: &ParamVector, data: &MiniBatch<'_>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData("accuracy needs at least one row"));
    }
    check_inputs(spec, params, data)?;
    let preds = predict(spec, params, data)?;
    let correct = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch() -> (Vec<f64>, Vec<usize>) {
        (vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0], vec![0, 2, 1])
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelSpec::linear(2, 3).parameter_count(), 9);
        assert_eq!(ModelSpec::mlp(2, vec![4], 3).parameter_count(), 27);
        assert_eq!(init_params(&ModelSpec::linear(2, 3), 7).len(), 9);
        assert_eq!(init_params(&ModelSpec::mlp(2, vec![4], 3), 0).len(), 27);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = ModelSpec::mlp(4, vec![5], 3);
        let a = init_params(&spec, 11);
        assert_eq!(a, init_params(&spec, 11));
        assert_ne!(a, init_params(&spec, 12));
        // first layer: 20 weights bounded by 1/2, then 5 zero biases
        assert!(a.as_slice()[..20].iter().all(|w| w.abs() <= 0.5));
        assert!(a.as_slice()[20..25].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_params_give_log_num_classes() {
        let spec = ModelSpec::linear(2, 3);
        let (x, y) = toy_batch();
        let batch = MiniBatch::new(&x, &y, 2).unwrap();
        let (loss, _) = loss_and_gradient(&spec, &ParamVector::zeros(9), &batch).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_is_mean_invariant() {
        let spec = ModelSpec::mlp(2, vec![3], 3);
        let params = init_params(&spec, 3);
        let (x, y) = toy_batch();
        let (x2, y2) = ([x.clone(), x.clone()].concat(), [y.clone(), y.clone()].concat());
        let (l1, g1) = loss_and_gradient(&spec, &params, &MiniBatch::new(&x, &y, 2).unwrap()).unwrap();
        let (l2, g2) =
            loss_and_gradient(&spec, &params, &MiniBatch::new(&x2, &y2, 2).unwrap()).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_and_label_errors() {
        let spec = ModelSpec::linear(2, 3);
        let (x, _) = toy_batch();
        let bad = [0, 1, 3];
        let batch = MiniBatch::new(&x, &bad, 2).unwrap();
        assert!(matches!(
            loss_and_gradient(&spec, &ParamVector::zeros(9), &batch),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
        let ok = [0, 1, 2];
        let batch = MiniBatch::new(&x, &ok, 2).unwrap();
        assert!(matches!(
            loss_and_gradient(&spec, &ParamVector::zeros(8), &batch),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(MiniBatch::new(&x, &[0, 1], 2).is_err());
        assert!(MiniBatch::new(&[], &[], 2).is_err());
    }

    #[test]
    fn accuracy_tie_break_goes_to_class_zero() {
        let spec = ModelSpec::linear(2, 3);
        let (x, _) = toy_batch();
        let zeros = [0, 0, 0];
        let batch = MiniBatch::new(&x, &zeros, 2).unwrap();
        let acc = predict_accuracy(&spec, &ParamVector::zeros(9), &batch).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn accuracy_of_perfect_classifier() {
        // class k is selected by the bias alone
        let spec = ModelSpec::linear(1, 2);
        let x = [1.0, -1.0, 2.0];
        let y = [1, 0, 1];
        // logits = w_k * x; w_0 = -1, w_1 = +1
        let params = ParamVector::from_vec(vec![-1.0, 1.0, 0.0, 0.0]);
        let batch = MiniBatch::new(&x, &y, 1).unwrap();
        assert_eq!(predict_accuracy(&spec, &params, &batch).unwrap(), 1.0);
    }

    #[test]
    fn gradient_step_decreases_loss() {
        let spec = ModelSpec::mlp(2, vec![4], 3);
        let mut params = init_params(&spec, 9);
        let (x, y) = toy_batch();
        let batch = MiniBatch::new(&x, &y, 2).unwrap();
        let (l0, g) = loss_and_gradient(&spec, &params, &batch).unwrap();
        params.axpy(-1e-3, &g);
        let (l1, _) = loss_and_gradient(&spec, &params, &batch).unwrap();
        assert!(l1 < l0);
        assert!(l1 >= 0.0);
    }
}
