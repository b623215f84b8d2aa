//! One agent's local training round.
//!
//! Starting from the broadcast model `x`, the agent takes `K` mini-batch SGD
//! steps. When drift correction is on, every step uses `g − c_i + c` in place
//! of the raw gradient `g`, and afterwards the local control variate becomes
//!
//! ```text
//! c_i⁺ = c_i − c + (x − y_i) / (K·η_l)
//! ```
//!
//! which equals the mean raw mini-batch gradient along the local trajectory.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{AgentDataBundle, BatchBuffer};
use crate::error::{Error, Result};
use crate::model::{loss_and_gradient, ModelSpec};
use crate::params::ParamVector;

/// What an agent sends back to the server after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentUpdate {
    /// `y_i − x`
    pub delta_y: ParamVector,
    /// `c_i⁺ − c_i`; all zeros for uncorrected training.
    pub delta_c: ParamVector,
    pub num_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    /// Number of mini-batch steps `K`.
    pub steps: usize,
    pub eta_l: f64,
    pub batch_size: usize,
    /// Apply the control-variate drift correction and update `c_i`.
    pub corrected: bool,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    local_control: ParamVector,
    data: AgentDataBundle,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    buffer: BatchBuffer,
}

impl ClientState {
    /// `c_i` starts at zero.
    pub fn new(data: AgentDataBundle, param_count: usize, seed: u64) -> Self {
        ClientState {
            local_control: ParamVector::zeros(param_count),
            data,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: Vec::new(),
            buffer: BatchBuffer::default(),
        }
    }

    pub fn data(&self) -> &AgentDataBundle {
        &self.data
    }

    pub fn local_control(&self) -> &ParamVector {
        &self.local_control
    }

    pub fn train_size(&self) -> usize {
        self.data.train.len()
    }

    /// Steps needed for one pass over the train split.
    pub fn epoch_steps(&self, batch_size: usize) -> usize {
        self.train_size().div_ceil(batch_size.max(1))
    }

    pub fn reset_control(&mut self) {
        self.local_control.fill_zero();
    }

    pub fn local_round(
        &mut self,
        spec: &ModelSpec,
        x: &ParamVector,
        c: &ParamVector,
        cfg: &LocalConfig,
    ) -> Result<AgentUpdate> {
        let n = self.train_size();
        if cfg.steps == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(cfg.eta_l > 0.0 && cfg.eta_l.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta_l must be positive, got {}",
                cfg.eta_l
            )));
        }
        if cfg.batch_size == 0 || cfg.batch_size > n {
            return Err(Error::BatchTooLarge {
                batch_size: cfg.batch_size,
                train_size: n,
            });
        }
        let len = self.local_control.len();
        x.check_len(len, "server model x")?;
        c.check_len(len, "global control c")?;

        // c − c_i is fixed for the whole round
        let drift = cfg.corrected.then(|| c.sub(&self.local_control));

        self.order.clear();
        self.order.extend(0..n);
        self.order.shuffle(&mut self.rng);
        let mut cursor = 0;

        let mut y = x.clone();
        for _ in 0..cfg.steps {
            if cursor >= n {
                self.order.shuffle(&mut self.rng);
                cursor = 0;
            }
            let end = (cursor + cfg.batch_size).min(n);
            let batch = self.buffer.gather(&self.data.train, &self.order[cursor..end])?;
            cursor = end;
            let (_, g) = loss_and_gradient(spec, &y, &batch)?;
            let ys = y.as_mut_slice();
            match &drift {
                Some(d) => {
                    for ((yj, gj), dj) in ys.iter_mut().zip(g.iter()).zip(d.iter()) {
                        *yj -= cfg.eta_l * (gj + dj);
                    }
                }
                None => {
                    for (yj, gj) in ys.iter_mut().zip(g.iter()) {
                        *yj -= cfg.eta_l * gj;
                    }
                }
            }
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("local_round"));
        }

        let delta_y = y.sub(x);
        let delta_c = if cfg.corrected {
            let inv = 1.0 / (cfg.steps as f64 * cfg.eta_l);
            let c_plus: Vec<f64> = self
                .local_control
                .iter()
                .zip(c.iter())
                .zip(x.iter().zip(y.iter()))
                .map(|((ci, cj), (xj, yj))| ci - cj + (xj - yj) * inv)
                .collect();
            let c_plus = ParamVector::from_vec(c_plus);
            let delta = c_plus.sub(&self.local_control);
            self.local_control = c_plus;
            delta
        } else {
            ParamVector::zeros(len)
        };
        Ok(AgentUpdate {
            delta_y,
            delta_c,
            num_samples: n,
        })
    }
}
