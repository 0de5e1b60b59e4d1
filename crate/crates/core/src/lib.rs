//! Explanation-guided edge rewiring attacks on graph neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: the immutable [`Graph`] value, canonical edges, class partitions.
//! - [`dataset`]: Planetoid ingestion, stochastic block model fixtures and the
//!   binary graph container.
//! - [`autodiff`]: a small reverse-mode tape over dense `f64` matrices.
//! - [`nn`]: two-layer GCN / GAT / GraphSAGE models, training and checkpoints.
//! - [`explain`]: GNNExplainer and PGExplainer edge masks and their union.
//! - [`attack`]: inter-class insertion / intra-class deletion plans.
//! - [`eval`]: misclassification rate, degree statistics, projections and sweeps.

pub mod attack;
pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod graph;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
pub use graph::{ClassPartition, Edge, Graph};
