//! Tucker denoising of order-3 tensors with entrywise statistical inference.
//!
//! The pipeline: observe a noisy tensor, fit a low multilinear-rank Tucker
//! decomposition by higher-order orthogonal iteration (HOOI) seeded with a
//! diagonal-deleted spectral initialization, then build plug-in confidence
//! regions for factor rows, confidence intervals for entries and entry
//! differences, and chi-square tests for row membership. A simulation
//! harness measures empirical coverage and power of those procedures.

pub mod error;
pub mod hooi;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
