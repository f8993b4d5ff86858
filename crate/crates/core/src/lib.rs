//! Emotional mimicry intensity regression from per-frame audio features.
//!
//! A two-layer LSTM reads a sequence of 1027-dimensional frames (1024
//! acoustic embedding dims followed by valence, arousal and dominance). Its
//! final hidden state is concatenated with the mean of all valid frames and
//! a two-layer MLP maps the fused vector to six emotion intensities.
//!
//! Modules:
//!
//! * [`linalg`]: matrices, activations, the seeded [`linalg::Rng`]
//! * [`model`]: forward/backward passes, parameters, checkpoints
//! * [`training`]: MSE, Adam, cosine schedule, early stopping
//! * [`metrics`]: per-emotion Pearson correlation and ρ_VAL
//! * [`dataset`]: feature files, manifests, batching, synthetic data
//! * [`gradcheck`]: finite-difference verification of the backward pass
//! * [`cli`]: the `emi` command-line tool

mod binio;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{Error, Result};
