//! Files, checkpoints and the command line for `cdtd-core`.
//!
//! Schemas, configs and reports are JSON; tables are CSV; models are a
//! single binary checkpoint holding everything needed to sample.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod io;
pub mod pipeline;

pub use checkpoint::{Checkpoint, TrainMeta};
pub use error::{Error, Result};
pub use pipeline::RunConfig;
