//! Core algorithms for simulating group-fairness-aware federated fine-tuning.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and a seed; file formats, threading and the
//! command line live in the companion `fairfed` crate.
//!
//! * [`linalg`]: dense row-major matrices.
//! * [`rng`]: the portable seeded generator every random draw goes through.
//! * [`adapter`]: LoRA, SVD-LoRA and FairLoRA adapters (per-group singular values).
//! * [`model`]: a frozen cosine-similarity classifier the adapter plugs into.
//! * [`data`]: synthetic demographically skewed sites and stratified splits.
//! * [`federation`]: client sampling, local SGD, weighted aggregation and EMA.
//! * [`metrics`]: AUC, equity-scaled AUC, EOD, SPD and report assembly.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod adapter;
pub mod data;
mod error;
pub mod federation;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
