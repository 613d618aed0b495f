//! Cooperative contextual bandits for metric-free individual fairness.
//!
//! Two gradient contextual bandits, one per value of a binary sensitive
//! attribute, see the same context vector. The bandit matching the
//! individual's group acts and is rewarded with prediction correctness minus
//! `lambda` times the KL divergence between the two bandits' action
//! distributions. Around that core the crate provides the tabular data
//! pipeline, a logistic-regression baseline, the accuracy / discrimination /
//! consistency metrics and validation-driven model selection.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI uses.

pub mod baseline;
pub mod ccb;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Example = data::Example<f64>;
pub type SplitDataset = data::SplitDataset<f64>;
pub type PolicyParameters = policy::PolicyParameters<f64>;
pub type ActionDistribution = policy::ActionDistribution<f64>;
pub type CcbModel = ccb::CcbModel<f64>;
pub type LrParameters = baseline::LrParameters<f64>;

pub type Example32 = data::Example<f32>;
pub type SplitDataset32 = data::SplitDataset<f32>;
pub type PolicyParameters32 = policy::PolicyParameters<f32>;
pub type CcbModel32 = ccb::CcbModel<f32>;
pub type LrParameters32 = baseline::LrParameters<f32>;
