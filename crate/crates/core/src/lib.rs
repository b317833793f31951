//! Desk-scale water-fat separation toolkit.
//!
//! Simulates multi-echo gradient-echo acquisitions of synthetic cardiac
//! phantoms, separates them into water/fat/R2*/off-resonance maps with a
//! conventional model-based fit (VARPRO amplitude solve + regularized
//! field-map search), and trains a from-scratch U-Net to perform the same
//! separation end-to-end. An evaluation layer compares the two methods with
//! ROI statistics, Pearson correlation, SNR and paired t-tests.
//!
//! Module map:
//! - [`protocol`], [`maps`], [`raster`], [`rng`] — shared domain types,
//!   binary raster container, deterministic seeding.
//! - [`signal`] — forward signal model, phantom generation, corruption
//!   models (noise, bipolar phase error, fold-over).
//! - [`fit`] — conventional model-based separation.
//! - [`nn`] — differentiable layer primitives, U-Net, Nadam, training.
//! - [`dataset`] — input-mode assembly, normalization, augmentation, splits.
//! - [`eval`] — PDFF, ROI statistics, correlation, SNR, t-tests, reports.
//! - [`corpus`] — on-disk corpus layout and manifest.
//! - [`config`] — TOML run configuration.

pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fit;
pub mod maps;
pub mod nn;
pub mod pipeline;
pub mod protocol;
pub mod raster;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};

// Re-exported so binaries can configure the same global thread pool the
// library's parallel stages use.
pub use rayon;
