//! Per-round agent weights from update distances.
//!
//! Each round the server measures how far every agent's update `Δy_i` lies
//! from Alice's update `Δy_⋆`. With `dm` and `dM` the smallest and largest of
//! those distances over the other agents, Alice is assigned the pseudo-distance
//!
//! ```text
//! d_⋆ = dm · (1 − (dM − dm)/dM · (1 − Ω(r)))
//! ```
//!
//! which slides from `dm` (Ω = 1, global) towards 0 (Ω → 0, local). Raw
//! weights are then thresholded by
//!
//! ```text
//! α_i = max(Ψ(r) − (d_i − d_⋆)/(dM − d_⋆), 0)
//! ```
//!
//! normalized onto the simplex and averaged with the two previous rounds'
//! normalized weights. From round `0.95·R` on, the raw weights are forced to a
//! one-hot vector on Alice.
//!
//! Degenerate inputs are resolved by taking limits:
//!
//! - `dM = 0` (every update equals Alice's): the `(dM − dm)/dM` factor is 0.
//! - `dM = d_⋆`: the ratio term is 0, so every agent gets `Ψ(r)`.
//! - every raw weight is 0 (only when `Ψ(r) = 0`): one-hot on Alice.

use serde::{Deserialize, Serialize};

use crate::client::AgentUpdate;
use crate::error::{Error, Result};

/// Personalization schedule shared by Ω and Ψ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `1 / (1 + exp(ΔΩ · ((r + offset) / (R/2) − 1)))`
    Sigmoid { delta_omega: f64, offset: i64 },
    Constant { value: f64 },
    /// `table[r − 1]`; the last entry repeats past the end.
    Table { values: Vec<f64> },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Sigmoid {
            delta_omega: 3.2,
            offset: 0,
        }
    }
}

impl Schedule {
    pub fn validate(&self, total_rounds: usize) -> Result<()> {
        let in_range = |v: f64| v > 0.0 && v <= 1.0;
        match self {
            Schedule::Sigmoid { delta_omega, .. } if !(*delta_omega > 0.0 && delta_omega.is_finite()) => {
                Err(Error::InvalidArgument(format!(
                    "delta_omega must be positive, got {delta_omega}"
                )))
            }
            Schedule::Constant { value } if !in_range(*value) => Err(Error::InvalidArgument(format!(
                "constant schedule value must lie in (0, 1], got {value}"
            ))),
            Schedule::Table { values } if values.len() < total_rounds || values.is_empty() => {
                Err(Error::InvalidArgument(format!(
                    "schedule table has {} entries but {total_rounds} rounds are configured",
                    values.len()
                )))
            }
            Schedule::Table { values } if !values.iter().all(|&v| in_range(v)) => Err(
                Error::InvalidArgument("schedule table values must lie in (0, 1]".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Ω(r) = Ψ(r) for round `r` of `total_rounds`.
    pub fn value(&self, r: usize, total_rounds: usize) -> f64 {
        match self {
            Schedule::Sigmoid {
                delta_omega,
                offset,
            } => {
                let shifted = r as f64 + *offset as f64;
                let half = total_rounds as f64 / 2.0;
                1.0 / (1.0 + (delta_omega * (shifted / half - 1.0)).exp())
            }
            Schedule::Constant { value } => *value,
            Schedule::Table { values } => values[r.clamp(1, values.len()) - 1],
        }
    }
}

/// The normalized weights of the previous two rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub alpha_prev1: Vec<f64>,
    pub alpha_prev2: Vec<f64>,
}

impl WeightState {
    pub fn uniform(num_agents: usize) -> Self {
        let u = vec![1.0 / num_agents as f64; num_agents];
        WeightState {
            alpha_prev1: u.clone(),
            alpha_prev2: u,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.alpha_prev1.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightOutput {
    /// Three-round average used for aggregation.
    pub alpha_smoothed: Vec<f64>,
    /// This round's normalized weights.
    pub alpha_raw: Vec<f64>,
    /// `‖Δy_i − Δy_⋆‖₂`, zero at Alice.
    pub distances: Vec<f64>,
    pub d_alice: f64,
    pub d_min: f64,
    pub d_max: f64,
}

/// Euclidean distance of every update from Alice's.
pub fn pairwise_distances(updates: &[AgentUpdate], alice: usize) -> Result<Vec<f64>> {
    let reference = &updates
        .get(alice)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "alice index {alice} out of range for {} updates",
                updates.len()
            ))
        })?
        .delta_y;
    updates
        .iter()
        .map(|u| {
            u.delta_y.check_len(reference.len(), "update length")?;
            Ok(u.delta_y.distance(reference))
        })
        .collect()
}

/// Mean of three vectors; exact when all three agree.
fn average3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((&a, &b), &c)| a + ((b - a) + (c - a)) / 3.0)
        .collect()
}

fn one_hot(n: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[at] = 1.0;
    v
}

/// Computes this round's weights and advances `state`.
///
/// `r` is 1-based; the one-hot cutoff applies once `r ≥ 0.95·total_rounds`.
pub fn calc_weights(
    distances: &[f64],
    alice: usize,
    r: usize,
    total_rounds: usize,
    omega: f64,
    psi: f64,
    state: &mut WeightState,
) -> Result<WeightOutput> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "weights need at least two agents".into(),
        ));
    }
    if alice >= n {
        return Err(Error::InvalidArgument(format!(
            "alice index {alice} out of range for {n} agents"
        )));
    }
    if state.num_agents() != n {
        return Err(Error::DimensionMismatch {
            context: "weight state",
            expected: n,
            got: state.num_agents(),
        });
    }
    if distances.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::InvalidArgument(
            "distances must be finite and non-negative".into(),
        ));
    }

    let others = || distances.iter().enumerate().filter(|&(i, _)| i != alice).map(|(_, &d)| d);
    let d_max = others().fold(f64::NEG_INFINITY, f64::max);
    let d_min = others().fold(f64::INFINITY, f64::min);

    let spread = if d_max > 0.0 { (d_max - d_min) / d_max } else { 0.0 };
    let d_alice = d_min * (1.0 - spread * (1.0 - omega));
    let range = d_max - d_alice;

    let mut raw: Vec<f64> = distances
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let d = if i == alice { d_alice } else { d };
            let ratio = if range > 0.0 { (d - d_alice) / range } else { 0.0 };
            (psi - ratio).max(0.0)
        })
        .collect();

    if r as f64 >= 0.95 * total_rounds as f64 {
        raw = one_hot(n, alice);
    }
    let total: f64 = raw.iter().sum();
    let alpha_raw = if total > 0.0 {
        raw.iter().map(|a| a / total).collect()
    } else {
        one_hot(n, alice)
    };

    let alpha_smoothed = average3(&state.alpha_prev2, &state.alpha_prev1, &alpha_raw);
    state.alpha_prev2 = std::mem::replace(&mut state.alpha_prev1, alpha_raw.clone());

    Ok(WeightOutput {
        alpha_smoothed,
        alpha_raw,
        distances: distances.to_vec(),
        d_alice,
        d_min,
        d_max,
    })
}
