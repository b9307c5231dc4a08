//! Evaluation toolkit for generative models of wireless channels.
//!
//! The crate bundles four layers:
//!
//! * value types, randomness and the `CHD1` dataset format ([`dataset`], [`rng`], [`linalg`]),
//! * a synthetic radio propagation environment ([`synth`]),
//! * reference generative models: sample covariance, Gaussian mixture and an
//!   analytic-score diffusion sampler ([`genmod`]),
//! * metrics, downstream applications and the cross-check pipeline
//!   ([`metrics`], [`apps`], [`crosscheck`]).
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Either way the
//! results are bit-identical: work is split into fixed-size chunks and reduced
//! in a fixed order.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod apps;
pub mod crosscheck;
pub mod dataset;
pub mod error;
pub mod genmod;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod synth;
pub mod types;

pub use dataset::{normalize_dataset, read_dataset, write_dataset, ChannelDataset, DatasetMeta};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use rng::RngStream;
pub use types::{ChannelVector, NoiseConfig, UraGeometry};
