//! Janus: node anomaly detection with paired Euclidean and hyperbolic graph
//! autoencoders aligned by a product-metric contrastive loss.
//!
//! Module map:
//! - [`hypgeom`]: Lorentz hyperboloid kernel, bounded and product metrics.
//! - [`graph`]: graph storage, normalized operators, node views, neighbor sampling.
//! - [`tensor`]: dense reverse-mode autodiff used by every trainable piece.
//! - [`model`]: encoder/decoder towers in both geometries.
//! - [`loss`]: contrastive, adjacency and feature losses, anomaly scores.
//! - [`trainer`]: training loop, Adam, configs, checkpoints, multi-seed runs.
//! - [`eval`]: ROC-AUC, AP, cumulative gain, synthetic anomaly injection.
//! - [`cli`]: the `janus` command-line front end.

pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hypgeom;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{JanusError, Result};
