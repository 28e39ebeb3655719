//! Certified robustness for classifiers smoothed with anisotropic noise.
//!
//! A base classifier is wrapped into a smoothed one by voting over noisy
//! copies of the input. Monte Carlo sampling plus a Clopper-Pearson bound
//! turn the vote into a confidence-backed score, which converts into a
//! region around the input (an ellipsoid for Gaussian noise, a generalized
//! cross-polytope for uniform noise) inside which the prediction provably
//! cannot change. Per-axis noise scales are optimized to grow that region,
//! and a small experiment harness ties data generation, training,
//! optimization, and certification together.

pub mod certify;
pub mod error;
pub mod harness;
pub mod nn;
pub mod optimize;
pub mod report;
pub mod regions;
pub mod smoothing;
pub mod stats;

pub use error::{Error, Result};
