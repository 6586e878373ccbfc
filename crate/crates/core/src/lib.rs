//! Maximum-entropy generative models for constrained 2D landmark
//! displacement data: dataset statistics with honest subject-level error
//! bars, Gaussian and cubic maximum-entropy families, Gaussian-Bernoulli
//! RBMs, ROC-based model comparison, and interaction-geometry analysis.

pub mod classify;
pub mod cubic;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod grbm;
pub mod linalg;
pub mod quadrature;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
