//! Cognition-mode aware variational knowledge tracing.
//!
//! Student and question embeddings are diagonal Gaussians. Their priors come
//! from the concepts a question covers and from a mixture over cognition
//! modes, which capsule routing extracts from the student's practice
//! history. The crate needs only `alloc`; file formats and the command line
//! live in the companion `cmvf` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod capsules;
pub mod data;
pub mod encoder;
mod error;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod objective;
pub mod optim;
pub mod trainer;
pub mod variational;

pub use error::{Error, Result};
pub use model::{ModelDims, ModelParams};
pub use objective::Variant;
pub use trainer::{Checkpoint, TrainConfig, Trainer};
