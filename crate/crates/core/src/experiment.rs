//! Building and running a full experiment from a config.
//!
//! Every random choice is derived from one seed: the synthetic source data,
//! the row partition, concept-shift permutations, model initialization, and
//! each agent's batch-order stream. The same config and seed always yield the
//! same records, whatever the worker count.

use crate::client::ClientState;
use crate::config::{DatasetKind, ExperimentConfig, NUM_CLASSES};
use crate::data::{
    apply_concept_shift, generate_synthetic, load_idx, partition_by_shift, partition_hash,
    AgentDataBundle, LabeledDataset, PartitionSpec,
};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelSpec};
use crate::seed::derive_seed;
use crate::server::{RoundConfig, RoundRecord, ServerState};

pub struct Experiment {
    spec: ModelSpec,
    server: ServerState,
    clients: Vec<ClientState>,
    round_cfg: RoundConfig,
    partition_hash: String,
    pool: Option<rayon::ThreadPool>,
}

fn load_source(cfg: &ExperimentConfig, seed: u64) -> Result<LabeledDataset> {
    match cfg.data.dataset {
        DatasetKind::Synthetic => generate_synthetic(
            NUM_CLASSES,
            cfg.data.input_dim,
            cfg.data.per_class,
            cfg.data.spread,
            derive_seed(seed, "dataset", 0),
        ),
        DatasetKind::IdxMnist => {
            let images = cfg.data.images.as_ref().ok_or_else(|| Error::config("data.images", "is required"))?;
            let labels = cfg.data.labels.as_ref().ok_or_else(|| Error::config("data.labels", "is required"))?;
            load_idx(images, labels)
        }
    }
}

/// Partitions the source for `seed` without concept shift.
fn base_partition(cfg: &ExperimentConfig, source: &LabeledDataset, seed: u64) -> Result<Vec<AgentDataBundle>> {
    let spec = PartitionSpec {
        proportions: cfg.data.distribution.proportions(),
        num_agents: cfg.num_agents,
        alice_index: 0,
        concept_shift: false,
        seed: derive_seed(seed, "partition", 0),
        samples_per_agent: cfg.data.samples_per_agent,
        train_fraction: cfg.data.train_fraction,
    };
    partition_by_shift(source, &spec)
}

impl Experiment {
    /// Builds the experiment for `seed` with the config's `alice_index`.
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let source = load_source(cfg, seed)?;
        let base = base_partition(cfg, &source, seed)?;
        Self::assemble(cfg, seed, cfg.alice_index, base)
    }

    /// One experiment per requested Alice, all sharing the same partition.
    pub fn build_per_alice(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(usize, Self)>> {
        let source = load_source(cfg, seed)?;
        let base = base_partition(cfg, &source, seed)?;
        cfg.alices()
            .into_iter()
            .map(|alice| Ok((alice, Self::assemble(cfg, seed, alice, base.clone())?)))
            .collect()
    }

    fn assemble(cfg: &ExperimentConfig, seed: u64, alice: usize, base: Vec<AgentDataBundle>) -> Result<Self> {
        cfg.validate()?;
        let hash = partition_hash(&base);
        let mut bundles = if cfg.data.distribution.concept_shift() {
            apply_concept_shift(base, alice, derive_seed(seed, "partition", 0))?
        } else {
            base
        };
        let mut agent_seeds: Vec<u64> = (0..cfg.num_agents)
            .map(|i| derive_seed(seed, "agent", i as u64))
            .collect();
        if cfg.data.replicate_alice {
            bundles = vec![bundles[alice].clone(); cfg.num_agents];
            agent_seeds = vec![agent_seeds[alice]; cfg.num_agents];
        }

        let spec = cfg.model_spec(bundles[alice].train.input_dim());
        spec.validate()?;
        let x = init_params(&spec, derive_seed(seed, "init", 0));
        let count = spec.parameter_count();
        let clients = bundles
            .into_iter()
            .zip(agent_seeds)
            .map(|(b, s)| ClientState::new(b, count, s))
            .collect();
        let server = ServerState::new(x, cfg.optimizer.eta_g, cfg.algorithm.name, cfg.num_agents);
        let round_cfg = RoundConfig {
            eta_l: cfg.optimizer.eta_l,
            batch_size: cfg.optimizer.batch_size,
            local_steps: cfg.optimizer.local_steps,
            total_rounds: cfg.rounds,
            alice_index: alice,
            schedule: cfg.schedule(),
        };
        let pool = match cfg.workers {
            Some(w) => Some(rayon::ThreadPoolBuilder::new().num_threads(w).build()?),
            None => None,
        };
        Ok(Experiment {
            spec,
            server,
            clients,
            round_cfg,
            partition_hash: hash,
            pool,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    /// Mutable access for harnesses that pin or inspect client state between rounds.
    pub fn clients_mut(&mut self) -> &mut [ClientState] {
        &mut self.clients
    }

    pub fn server_mut(&mut self) -> &mut ServerState {
        &mut self.server
    }

    pub fn round_config(&self) -> &RoundConfig {
        &self.round_cfg
    }

    /// Digest of the row assignment, before any concept shift.
    pub fn partition_hash(&self) -> &str {
        &self.partition_hash
    }

    pub fn rounds_remaining(&self) -> usize {
        self.round_cfg.total_rounds - self.server.round
    }

    pub fn step(&mut self) -> Result<RoundRecord> {
        let Experiment {
            spec,
            server,
            clients,
            round_cfg,
            pool,
            ..
        } = self;
        match pool {
            Some(pool) => pool.install(|| server.run_round(spec, clients, round_cfg)),
            None => server.run_round(spec, clients, round_cfg),
        }
    }

    /// One round with caller-supplied aggregation weights.
    pub fn step_with_weights(&mut self, weights: &[f64]) -> Result<RoundRecord> {
        let Experiment {
            spec,
            server,
            clients,
            round_cfg,
            pool,
            ..
        } = self;
        match pool {
            Some(pool) => pool.install(|| server.run_round_with_weights(spec, clients, round_cfg, weights)),
            None => server.run_round_with_weights(spec, clients, round_cfg, weights),
        }
    }

    pub fn run(mut self) -> Result<Vec<RoundRecord>> {
        (0..self.rounds_remaining()).map(|_| self.step()).collect()
    }
}

/// Runs `cfg` once with its master seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>> {
    Experiment::build(cfg, cfg.master_seed)?.run()
}
