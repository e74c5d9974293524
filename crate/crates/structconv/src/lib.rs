//! Structural convolutional networks for multivariate time series.
//!
//! A structural convolution is a temporal convolution whose per-node kernels
//! sum only over graph-neighboring nodes: an adjacency matrix (plus a hop
//! distance) decides which sub-kernel entries exist, and everything masked
//! out stays exactly zero through initialization, training and
//! serialization. On a lattice graph the masks reduce to the familiar image
//! convolution footprints; on an arbitrary graph they encode whatever
//! dependency structure the data carries.
//!
//! The crate provides:
//!
//! - [`graph`]: adjacency validation, hop-distance receptive-field masks,
//!   lattice graphs.
//! - [`tensor`] / [`rng`]: the `[time][node][channel]` series tensor and a
//!   seeded, platform-stable random stream.
//! - [`layers`]: structural convolution and its transpose, time-only
//!   convolution, ReLU, batch normalization, temporal max-pool/unpool and a
//!   fully connected layer, each with exact backward passes.
//! - [`models`]: declarative specs compiled into SCNN / TCNN predictors or
//!   an SCAE autoencoder, plus a bit-exact checkpoint format.
//! - [`optim`]: ADAM with optional L1 shrinkage on kernel weights, epoch
//!   training loops, and the plain-then-L1 autoencoder schedule.
//! - [`data`]: CSV ingestion, contiguous splits, standardization, sliding
//!   windows, and a synthetic graph-coupled series generator.
//! - [`analysis`]: RMSE/R-squared reports, recurrence matrices, kernel
//!   sparsity summaries, CSV/PGM heatmap export.
//! - [`fdcheck`]: finite-difference gradient audit over every layer kind.
//! - [`config`] / [`cli`]: `key = value` run configuration and the
//!   `structconv` command set built on top of the library.
//!
//! See the crate examples for runnable end-to-end walkthroughs of each
//! capability.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod fdcheck;
pub mod graph;
pub mod layers;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{bfs_distance, hop_mask, lattice_graph, Graph, HopMask, Neighborhood};
pub use rng::Rng;
pub use tensor::{l2_distance, SeriesTensor};
