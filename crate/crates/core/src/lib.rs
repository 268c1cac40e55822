//! Balanced sharpness-aware minimization (BSAM) for imbalanced regression.
//!
//! The crate bundles everything a desk-scale experiment needs: a small
//! reverse-mode autodiff engine with an MLP regressor, label binning and
//! importance weights, the SGD/SAM/ImbSAM/BSAM optimizers, evaluation
//! metrics split by label-density region, Hessian-based sharpness
//! diagnostics and a synthetic imbalanced data generator.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod engine;
mod error;
pub mod imbalance;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod sharpness;
pub mod trainer;

pub use error::{Error, Result};
