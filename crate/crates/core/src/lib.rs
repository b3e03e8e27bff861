//! Continuous diffusion for mixed-type tabular data.
//!
//! Continuous features and learned embeddings of categorical features are
//! perturbed by the same Gaussian noise process. A single MLP score network
//! predicts denoised values for the continuous features and class
//! probabilities for the categorical ones, whose losses are calibrated to a
//! common unit scale. Each feature (or feature type) gets its own adaptive
//! noise schedule, learned online from the observed losses, which the
//! deterministic sampler also uses to take feature-specific steps.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and thread pools live in the companion `cdtd` crate.

#![no_std]

extern crate alloc;

pub mod copula;
pub mod error;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod network;
pub mod preprocess;
pub mod sampler;
pub mod schedule;
pub mod schema;
pub mod split;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{EdmCoefficients, LossNormalizer};
pub use network::{Network, NetworkConfig, Parameters};
pub use preprocess::{Dataset, PreprocState};
pub use sampler::SampleConfig;
pub use schedule::{ScheduleMode, ScheduleParams, ScheduleRegistry};
pub use schema::{FeatureKind, FeatureSpec, RawTable, TableSchema};
pub use trainer::{TrainConfig, TrainState};
