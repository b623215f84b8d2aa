//! Personalized federated learning simulator.
//!
//! One target agent, Alice, learns with help from `N - 1` peers whose data
//! follows shifted label distributions. Each round the server weighs peer
//! updates by how close they land to Alice's own, falling back to Alice
//! alone as training ends. Local training, FedAvg and SCAFFOLD are provided
//! as baselines and share the same round loop.
//!
//! ```
//! use waffle_sim::{config::ExperimentConfig, data::Distribution, server::Algorithm};
//!
//! let mut cfg = ExperimentConfig::synthetic(Algorithm::Waffle, Distribution::B, 3);
//! cfg.data.per_class = 40;
//! let records = waffle_sim::experiment::run_experiment(&cfg)?;
//! assert_eq!(records.len(), 3);
//! assert!((records[0].weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
//! # Ok::<(), waffle_sim::Error>(())
//! ```

pub mod client;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod params;
pub mod report;
pub mod seed;
pub mod server;
pub mod weights;

pub use error::{Error, Result};
pub use params::ParamVector;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/local-training.md")]
    mod local_training {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/output.md")]
    mod output {}
    #[doc = include_str!("../../../book/src/reproducing.md")]
    mod reproducing {}
}
