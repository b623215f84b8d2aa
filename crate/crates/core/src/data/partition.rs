//! Shift-template partitioning and concept shift.
//!
//! A distribution is a list of label shares summing to one. Agent `i` takes
//! the list cyclically right-shifted `i` places, so with the four-label
//! template agent 0 sees labels 0..=3 and agent 1 sees 1..=4. Concept-shifted
//! variants additionally relabel every agent except Alice through a random
//! permutation of the classes.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// The five benchmark distributions, or an explicit share template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    A,
    B,
    C,
    #[serde(rename = "A*", alias = "A_star")]
    AStar,
    #[serde(rename = "B*", alias = "B_star")]
    BStar,
    #[serde(untagged)]
    Custom(Vec<f64>),
}

impl Distribution {
    pub const BENCHMARK: [Distribution; 5] = [
        Distribution::A,
        Distribution::B,
        Distribution::C,
        Distribution::AStar,
        Distribution::BStar,
    ];

    /// Ten-class share template before any shift.
    pub fn proportions(&self) -> Vec<f64> {
        match self {
            Distribution::A | Distribution::AStar => vec![0.1; 10],
            Distribution::B | Distribution::BStar => {
                vec![0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
            }
            Distribution::C => vec![0.0, 0.0, 0.0, 0.1, 0.2, 0.4, 0.2, 0.1, 0.0, 0.0],
            Distribution::Custom(p) => p.clone(),
        }
    }

    pub fn concept_shift(&self) -> bool {
        matches!(self, Distribution::AStar | Distribution::BStar)
    }

    pub fn label(&self) -> String {
        match self {
            Distribution::A => "A".into(),
            Distribution::B => "B".into(),
            Distribution::C => "C".into(),
            Distribution::AStar => "A*".into(),
            Distribution::BStar => "B*".into(),
            Distribution::Custom(p) => {
                let parts: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                format!("[{}]", parts.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub proportions: Vec<f64>,
    pub num_agents: usize,
    pub alice_index: usize,
    pub concept_shift: bool,
    pub seed: u64,
    /// Rows per agent; `None` takes the largest size the source supports.
    pub samples_per_agent: Option<usize>,
    /// Fraction of each agent's rows (per class) kept for training.
    pub train_fraction: f64,
}

impl PartitionSpec {
    pub fn new(distribution: &Distribution, num_agents: usize, seed: u64) -> Self {
        PartitionSpec {
            proportions: distribution.proportions(),
            num_agents,
            alice_index: 0,
            concept_shift: distribution.concept_shift(),
            seed,
            samples_per_agent: None,
            train_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.proportions.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(
                "proportions must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "proportions must sum to 1, got {sum}"
            )));
        }
        if self.num_agents == 0 {
            return Err(Error::InvalidArgument("num_agents must be positive".into()));
        }
        if self.alice_index >= self.num_agents {
            return Err(Error::InvalidArgument(format!(
                "alice_index {} out of range for {} agents",
                self.alice_index, self.num_agents
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// One agent's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDataBundle {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// `label_permutation[original] = local label`.
    pub label_permutation: Vec<usize>,
    /// Source-dataset row indices backing `train`, in order.
    pub train_rows: Vec<usize>,
    /// Source-dataset row indices backing `test`, in order.
    pub test_rows: Vec<usize>,
}

/// `proportions` cyclically right-shifted `shift` places.
pub fn shifted_template(proportions: &[f64], shift: usize) -> Vec<f64> {
    let n = proportions.len();
    (0..n)
        .map(|c| proportions[(c + n - shift % n) % n])
        .collect()
}

/// Integer counts summing to `total`, each within one of `total * share`.
fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let targets: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).filter(|&c| shares[c] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

fn agent_class_counts(spec: &PartitionSpec, per_agent: usize) -> Vec<Vec<usize>> {
    (0..spec.num_agents)
        .map(|i| largest_remainder(&shifted_template(&spec.proportions, i), per_agent))
        .collect()
}

fn class_demand(counts: &[Vec<usize>], num_classes: usize) -> Vec<usize> {
    (0..num_classes)
        .map(|c| counts.iter().map(|agent| agent[c]).sum())
        .collect()
}

/// Largest per-agent size whose rounded demand fits every class.
fn max_samples_per_agent(spec: &PartitionSpec, available: &[usize]) -> usize {
    let total_share: Vec<f64> = (0..available.len())
        .map(|c| {
            (0..spec.num_agents)
                .map(|i| shifted_template(&spec.proportions, i)[c])
                .sum()
        })
        .collect();
    let mut m = total_share
        .iter()
        .zip(available)
        .filter(|(s, _)| **s > 0.0)
        .map(|(s, &a)| (a as f64 / s).floor() as usize)
        .min()
        .unwrap_or(0)
        // float share sums can undershoot the bound; the exact check below corrects it
        + spec.num_agents;
    while m > 0 {
        let demand = class_demand(&agent_class_counts(spec, m), available.len());
        if demand.iter().zip(available).all(|(d, a)| d <= a) {
            break;
        }
        m -= 1;
    }
    m
}

/// Deals source rows to agents following the shifted share templates.
///
/// Within each class the rows are shuffled once from `spec.seed` and dealt in
/// agent order, so no row is assigned twice. Each agent's rows are then split
/// per class into train and test. Concept shift, when requested, is applied
/// last.
pub fn partition_by_shift(data: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<AgentDataBundle>> {
    spec.validate()?;
    let num_classes = data.num_classes();
    if spec.proportions.len() != num_classes {
        return Err(Error::DimensionMismatch {
            context: "proportions vs dataset classes",
            expected: num_classes,
            got: spec.proportions.len(),
        });
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (row, &label) in data.labels().iter().enumerate() {
        by_class[label].push(row);
    }
    let available: Vec<usize> = by_class.iter().map(Vec::len).collect();

    let per_agent = match spec.samples_per_agent {
        Some(m) => m,
        None => max_samples_per_agent(spec, &available),
    };
    if per_agent == 0 {
        return Err(Error::EmptyData("source too small to give every agent a row"));
    }
    let counts = agent_class_counts(spec, per_agent);
    for (class, (&requested, &avail)) in class_demand(&counts, num_classes)
        .iter()
        .zip(&available)
        .enumerate()
    {
        if requested > avail {
            return Err(Error::InsufficientClassRows {
                class,
                requested,
                available: avail,
            });
        }
    }

    for (class, rows) in by_class.iter_mut().enumerate() {
        rows.shuffle(&mut rng_for(spec.seed, "partition-class", class as u64));
    }
    let mut cursor = vec![0usize; num_classes];
    let mut bundles = Vec::with_capacity(spec.num_agents);
    for agent_counts in &counts {
        let mut train_rows = Vec::new();
        let mut test_rows = Vec::new();
        for (class, &n) in agent_counts.iter().enumerate() {
            let rows = &by_class[class][cursor[class]..cursor[class] + n];
            cursor[class] += n;
            let n_train = (n as f64 * spec.train_fraction).round() as usize;
            train_rows.extend_from_slice(&rows[..n_train]);
            test_rows.extend_from_slice(&rows[n_train..]);
        }
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(Error::EmptyData("agent received an empty train or test split"));
        }
        bundles.push(AgentDataBundle {
            train: data.select(&train_rows),
            test: data.select(&test_rows),
            label_permutation: (0..num_classes).collect(),
            train_rows,
            test_rows,
        });
    }

    if spec.concept_shift {
        bundles = apply_concept_shift(bundles, spec.alice_index, spec.seed)?;
    }
    Ok(bundles)
}

/// Relabels every agent except `alice_index` through its own uniformly random
/// class permutation. Features are untouched.
pub fn apply_concept_shift(
    mut bundles: Vec<AgentDataBundle>,
    alice_index: usize,
    seed: u64,
) -> Result<Vec<AgentDataBundle>> {
    if bundles.is_empty() {
        return Err(Error::EmptyData("no bundles to shift"));
    }
    if alice_index >= bundles.len() {
        return Err(Error::InvalidArgument(format!(
            "alice_index {alice_index} out of range for {} agents",
            bundles.len()
        )));
    }
    for (i, bundle) in bundles.iter_mut().enumerate() {
        if i == alice_index {
            continue;
        }
        let num_classes = bundle.train.num_classes();
        let mut perm: Vec<usize> = (0..num_classes).collect();
        perm.shuffle(&mut rng_for(seed, "concept-shift", i as u64));
        for label in bundle
            .train
            .labels_mut()
            .iter_mut()
            .chain(bundle.test.labels_mut().iter_mut())
        {
            *label = perm[*label];
        }
        for p in bundle.label_permutation.iter_mut() {
            *p = perm[*p];
        }
    }
    Ok(bundles)
}

/// Short hex digest of which source rows went to which agent split.
///
/// Labels are not hashed, so a distribution and its concept-shifted twin
/// drawn from the same seed hash identically.
pub fn partition_hash(bundles: &[AgentDataBundle]) -> String {
    let mut h = Sha256::new();
    for (i, b) in bundles.iter().enumerate() {
        h.update((i as u64).to_le_bytes());
        for rows in [&b.train_rows, &b.test_rows] {
            h.update((rows.len() as u64).to_le_bytes());
            for &r in rows {
                h.update((r as u64).to_le_bytes());
            }
        }
    }
    h.finalize()[..8].iter().fold(String::new(), |mut s, byte| {
        let _ = write!(s, "{byte:02x}");
        s
    })
}
