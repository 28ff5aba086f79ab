//! Measuring how much second-order (covariance) class signal survives a
//! linear projection.
//!
//! The crate compares unsupervised projections (PCA, dense and very sparse
//! random projections) against the supervised Bhattacharyya-optimal
//! projection, using either the closed-form Bhattacharyya overlap between the
//! two projected Gaussian classes or the out-of-sample 0-1 loss of an embedded
//! QDA classifier.
//!
//! Module map:
//!
//! * [`types`] and [`rng`]: shared numeric types and path-addressed random streams.
//! * [`metrics`]: Chernoff/Bhattacharyya distances and overlaps.
//! * [`projections`]: PCA, random, sparse random and optimal projections.
//! * [`generators`]: covariance-pair families and sampling primitives.
//! * [`classify`]: embedded QDA, 0-1 loss, Monte Carlo Bayes risk.
//! * [`sweep`]: grid expansion, deterministic parallel execution, summaries.
//! * [`data`]: delimited-text dataset ingestion.

pub mod classify;
pub mod data;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod generators;
mod linalg;
pub mod metrics;
pub mod projections;
pub mod rng;
pub mod sweep;
pub mod types;

pub use error::{Error, Result};
pub use rng::{derive_stream, RngStream};
pub use types::{make_spd, make_spd_strict, Class, LabeledDataset, ProjectionMatrix, SpdMatrix, TwoClassGaussian};
