//! Learned latent state representations for partially observable control.
//!
//! A latent sequence `z_1..z_T` is fitted jointly with a linear decoder
//! (latent to observation) and per-action affine+tanh dynamics (latent to next
//! latent) on randomly collected trajectories. New episodes are represented
//! either by re-optimizing the whole latent history at each step or by
//! running the learned dynamics forward, and policies are learned over the
//! representations with rollout classification policy iteration.
//!
//! The modules mirror the pipeline:
//!
//! - [`env`]: mountain car, warm-up starts, trajectory collection
//! - [`latent_model`]: decoder, dynamics, loss and subgradients
//! - [`trainer`]: joint fit over a dataset
//! - [`inference`]: exact and fast inference, the four strategies
//! - [`rcpi`]: linear policies, rollouts, hinge classifier, policy iteration
//! - [`harness`]: experiment matrix, latent export, reproducible runs
//! - [`format`]: plain-text file formats

pub mod env;
pub mod error;
pub mod format;
pub mod harness;
pub mod inference;
pub mod latent_model;
mod optim;
pub mod rcpi;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
