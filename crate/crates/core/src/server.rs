//! Round orchestration.
//!
//! A round broadcasts `(x, c)`, lets every participating agent train, weighs
//! the returned updates and applies
//!
//! ```text
//! (Δx, Δc) = Σ_i α_i (Δy_i, Δc_i)
//! x ← x + η_g Δx,   c ← c + Δc
//! ```
//!
//! The algorithms differ only in who trains, whether local steps are drift
//! corrected, and where the weights `α` come from.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{AgentUpdate, ClientState, LocalConfig};
use crate::error::{Error, Result};
use crate::model::{predict_accuracy, ModelSpec};
use crate::params::ParamVector;
use crate::weights::{calc_weights, pairwise_distances, Schedule, WeightState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Alice trains alone.
    Local,
    /// Uniform weights, plain local SGD.
    #[serde(rename = "fedavg")]
    FedAvg,
    /// Uniform weights, drift-corrected local SGD.
    Scaffold,
    /// Distance-based weights, drift-corrected local SGD.
    Waffle,
    /// Distance-based weights with plain local SGD and no control variates.
    WaffleNoCv,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Local,
        Algorithm::FedAvg,
        Algorithm::Scaffold,
        Algorithm::Waffle,
        Algorithm::WaffleNoCv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Local => "local",
            Algorithm::FedAvg => "fedavg",
            Algorithm::Scaffold => "scaffold",
            Algorithm::Waffle => "waffle",
            Algorithm::WaffleNoCv => "waffle_no_cv",
        }
    }

    pub fn corrected(self) -> bool {
        matches!(self, Algorithm::Scaffold | Algorithm::Waffle)
    }

    pub fn distance_weighted(self) -> bool {
        matches!(self, Algorithm::Waffle | Algorithm::WaffleNoCv)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

/// Per-round training settings shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub eta_l: f64,
    pub batch_size: usize,
    /// Local steps `K`; `None` means one pass over each agent's train split.
    pub local_steps: Option<usize>,
    pub total_rounds: usize,
    pub alice_index: usize,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    /// Aggregation weights actually applied.
    pub weights: Vec<f64>,
    /// Update distances from Alice (zero at Alice; all zero for `local`).
    pub distances: Vec<f64>,
    pub alice_test_accuracy: f64,
    pub best_so_far: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub x: ParamVector,
    pub c: ParamVector,
    pub eta_g: f64,
    /// Rounds completed so far.
    pub round: usize,
    pub algorithm: Algorithm,
    pub weight_state: Option<WeightState>,
    best: f64,
}

/// Weighted sum of updates, accumulated in agent-index order.
pub fn aggregate(updates: &[AgentUpdate], weights: &[f64]) -> Result<(ParamVector, ParamVector)> {
    if updates.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregation weights",
            expected: updates.len(),
            got: weights.len(),
        });
    }
    let first = updates
        .first()
        .ok_or(Error::EmptyData("no updates to aggregate"))?;
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "aggregation weights must lie on the simplex".into(),
        ));
    }
    let len = first.delta_y.len();
    let mut dx = ParamVector::zeros(len);
    let mut dc = ParamVector::zeros(len);
    for (u, &w) in updates.iter().zip(weights) {
        u.delta_y.check_len(len, "update delta_y")?;
        u.delta_c.check_len(len, "update delta_c")?;
        dx.axpy(w, &u.delta_y);
        dc.axpy(w, &u.delta_c);
    }
    Ok((dx, dc))
}

impl ServerState {
    pub fn new(x: ParamVector, eta_g: f64, algorithm: Algorithm, num_agents: usize) -> Self {
        let len = x.len();
        ServerState {
            x,
            c: ParamVector::zeros(len),
            eta_g,
            round: 0,
            algorithm,
            weight_state: algorithm
                .distance_weighted()
                .then(|| WeightState::uniform(num_agents)),
            best: f64::NEG_INFINITY,
        }
    }

    pub fn best_so_far(&self) -> f64 {
        self.best
    }

    /// Runs one round under the server's algorithm.
    pub fn run_round(
        &mut self,
        spec: &ModelSpec,
        clients: &mut [ClientState],
        cfg: &RoundConfig,
    ) -> Result<RoundRecord> {
        self.round_inner(spec, clients, cfg, None)
    }

    /// Runs one round with caller-supplied aggregation weights in place of
    /// the algorithm's own. Training still follows the algorithm.
    pub fn run_round_with_weights(
        &mut self,
        spec: &ModelSpec,
        clients: &mut [ClientState],
        cfg: &RoundConfig,
        weights: &[f64],
    ) -> Result<RoundRecord> {
        self.round_inner(spec, clients, cfg, Some(weights))
    }

    fn round_inner(
        &mut self,
        spec: &ModelSpec,
        clients: &mut [ClientState],
        cfg: &RoundConfig,
        forced: Option<&[f64]>,
    ) -> Result<RoundRecord> {
        let start = Instant::now();
        let n = clients.len();
        let alice = cfg.alice_index;
        if alice >= n {
            return Err(Error::InvalidArgument(format!(
                "alice index {alice} out of range for {n} agents"
            )));
        }
        if self.round >= cfg.total_rounds {
            return Err(Error::InvalidArgument(format!(
                "all {} rounds already run",
                cfg.total_rounds
            )));
        }
        let r = self.round + 1;
        let corrected = self.algorithm.corrected();
        let local = |client: &mut ClientState, x: &ParamVector, c: &ParamVector| {
            let steps = cfg
                .local_steps
                .unwrap_or_else(|| client.epoch_steps(cfg.batch_size));
            client.local_round(
                spec,
                x,
                c,
                &LocalConfig {
                    steps,
                    eta_l: cfg.eta_l,
                    batch_size: cfg.batch_size,
                    corrected,
                },
            )
        };

        let (weights, distances) = if self.algorithm == Algorithm::Local {
            let update = local(&mut clients[alice], &self.x, &self.c)?;
            self.x.add_assign(&update.delta_y);
            let mut w = vec![0.0; n];
            w[alice] = 1.0;
            (w, vec![0.0; n])
        } else {
            let (x, c) = (&self.x, &self.c);
            let updates: Vec<AgentUpdate> = clients
                .par_iter_mut()
                .map(|client| local(client, x, c))
                .collect::<Result<_>>()?;
            let distances = pairwise_distances(&updates, alice)?;
            let weights = match forced {
                Some(w) => w.to_vec(),
                None if self.algorithm.distance_weighted() && n >= 2 => {
                    let omega = cfg.schedule.value(r, cfg.total_rounds);
                    let state = self
                        .weight_state
                        .get_or_insert_with(|| WeightState::uniform(n));
                    calc_weights(&distances, alice, r, cfg.total_rounds, omega, omega, state)?
                        .alpha_smoothed
                }
                None => vec![1.0 / n as f64; n],
            };
            let (dx, dc) = aggregate(&updates, &weights)?;
            self.x.axpy(self.eta_g, &dx);
            if corrected {
                self.c.add_assign(&dc);
            }
            (weights, distances)
        };
        if !self.x.is_finite() || !self.c.is_finite() {
            return Err(Error::NonFinite("server update"));
        }
        self.round = r;

        let test = clients[alice].data().test.as_batch()?;
        let acc = predict_accuracy(spec, &self.x, &test)?;
        self.best = self.best.max(acc);
        Ok(RoundRecord {
            round: r,
            weights,
            distances,
            alice_test_accuracy: acc,
            best_so_far: self.best,
            wall_time: start.elapsed(),
        })
    }
}
