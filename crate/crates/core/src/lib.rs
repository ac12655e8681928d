//! Generative adversarial training with a performance-augmented
//! determinantal point process (DPP) loss.
//!
//! The generator is rewarded for batches that are jointly diverse (large
//! log-determinant of an RBF similarity kernel) and of high quality, where
//! quality is a random-weight scalarization of several performance
//! objectives. Everything runs on small synthetic 2-D design problems.
//!
//! Modules, bottom up:
//! - [`linalg`]: Cholesky, log-determinants, Jacobi eigensolver
//! - [`nn`]: fully connected networks, backprop, Adam, checkpoints
//! - [`quality`]: analytic performance fields, weights, surrogate model
//! - [`dpp`]: batch kernel, loss and its closed-form gradient
//! - [`gan`]: adversarial losses and the training loop
//! - [`evalmetrics`]: diversity statistics, Pareto front, novelty
//! - [`datasynth`]: synthetic training data
//! - [`config`], [`experiment`], [`verify`], [`cli`]: orchestration

pub mod cli;
pub mod config;
pub mod datasynth;
pub mod dpp;
pub mod error;
pub mod evalmetrics;
pub mod experiment;
pub mod gan;
pub mod linalg;
pub mod nn;
pub mod quality;
pub mod verify;

pub use error::{Error, Result};
