//! Self-interpretable graph neural networks, re-explanation diagnostics and
//! self-denoising (SD) calibration of edge-mask explanations.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: graph data model, synthetic house/cycle motif dataset, edge
//!   neighbourhoods and the dataset file format.
//! - [`nn`]: a small dense-math runtime (MLP, GIN layers with exact backprop,
//!   Gumbel-Sigmoid sampling, Adam, finite-difference oracle).
//! - [`model`]: explainer + encoder + classifier assembled into an SI-GNN,
//!   the size-constrained and KL-Bernoulli objectives, training, classifier
//!   adaptation and model persistence.
//! - [`consistency`]: re-explanation, ESC, score/context variation and
//!   correlation diagnostics.
//! - [`calibration`]: the SD update, ranking-correction threshold, prediction
//!   stability bounds and η selection.
//! - [`theory`]: latent-signal simulator and Monte Carlo checks of the
//!   explanation-budget bound.
//! - [`metrics`]: AUC, SPA, FID⁻/FID⁺, ACC and aggregation over seeds.
//! - [`ensemble`]: cross-model ensembling and the SD→EE composition.
//! - [`cli`]: the command-line surface used by the `selfdenoise` binary.

pub mod calibration;
pub mod cli;
pub mod consistency;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{Dataset, EdgeMask, EdgeNeighborhoodIndex, Graph, Split};
pub use model::{ArchDescriptor, Objective, SiGnnModel, TrainConfig};
