//! Manifold-based unsupervised anomaly detection.
//!
//! Data is reduced to a low-dimensional manifold (PCA or an autoencoder).
//! Points that are extreme *within* the manifold are found by on-manifold
//! detectors (LOF, isolation forest, elliptic envelope, one-class SVM, kNN)
//! run on the latent codes; points the manifold represents badly are found
//! by their reconstruction error. The union of the two flag sets catches
//! both kinds.

pub mod data;
pub mod detectors;
pub mod error;
pub mod experiment;
pub mod framework;
pub mod manifold;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
