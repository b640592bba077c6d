//! Pool-based active learning with an incremental neural architecture search.
//!
//! At every active round the learner re-runs a small architecture search over a
//! grid of homogeneous residual networks (`i` blocks per stack, `j` stacks),
//! starting from the architecture chosen in the previous round and only
//! considering the two minimal expansions of it. The selected network is then
//! trained from scratch on the labeled set and used to query the next batch.
//!
//! The crate is `no_std` (it needs `alloc`): everything here is pure
//! computation. File formats, the experiment runner and the command line live
//! in the companion `inas` crate.
//!
//! Module map:
//!
//! - [`arch`]: the search grid, its expansion edges and capacity accounting.
//! - [`nn`]: residual networks (dense and convolutional families), SGD training,
//!   prediction, MC-dropout passes and embeddings.
//! - [`query`]: softmax response, MC-dropout, coreset and random queries.
//! - [`active`]: the per-round search and the active learning loop.
//! - [`data`]: datasets, synthetic blobs, pools and the label oracle.
//! - [`curve`]: learning-curve areas, AUC gain and multi-seed aggregation.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod active;
pub mod arch;
pub mod curve;
pub mod data;
mod error;
pub mod nn;
pub mod query;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
