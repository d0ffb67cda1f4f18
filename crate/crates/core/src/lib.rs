//! Numerical core for uncertainty-aware contractive embedding experiments.
//!
//! Everything in this crate is pure computation over owned buffers: dense
//! matrix kernels, loss functions with analytic gradients, a small seeded
//! trainer, group-aware cross-validation, classification metrics, a
//! single-class detection evaluator and PCA diagnostics. IO, file formats
//! and the command line live in the `nuce-lab` crate.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod data;
pub mod detection;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};
pub use math::{DenseMatrix, DenseVector};
