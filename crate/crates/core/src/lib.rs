//! Adaptive path graph neural networks.
//!
//! This crate holds the numerical side of the project: an immutable sparse
//! [`Graph`], a small define-by-run reverse-mode [`Tape`] with the sparse edge
//! primitives needed for attention in `O(|E|)`, the adaptive path layer
//! (attention-weighted breadth aggregation followed by a gated depth update),
//! its lazy variant, GCN baselines, training with Adam, a planted-path
//! synthetic benchmark and receptive-path extraction.
//!
//! Everything here is `no_std` with `alloc`. File formats, checkpoints and the
//! command line live in the `geniepath` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod paths;
pub mod tape;
pub mod train;

pub use crate::data::{Dataset, Labels, Split, SynthSpec};
pub use crate::error::{Error, Result};
pub use crate::graph::{Graph, NormalizedAdjacency};
pub use crate::matrix::Matrix;
pub use crate::metrics::Metrics;
pub use crate::model::{Activation, Model, ModelConfig, Residual, Task, Variant};
pub use crate::params::ParamSet;
pub use crate::tape::{Gradients, SegmentIndex, Tape, Var};
