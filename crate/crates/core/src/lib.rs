//! Scalable multi-object tracking with partitioned generalised labeled
//! multi-Bernoulli (GLMB) densities.
//!
//! The crate is organised around the per-scan pipeline:
//!
//! - [`glmb`]: labeled densities, normalisation, truncation, estimation and
//!   enumeration-scale KLD.
//! - [`models`]: linear-Gaussian motion, sensor, clutter and birth models.
//! - [`update`]: the joint prediction/update of one label group, driven by a
//!   Gibbs sampler with an exhaustive-enumeration counterpart.
//! - [`partition`]: measurement-space bounding boxes, R-tree overlap search
//!   and measurement routing.
//! - [`factor`]: marginalisation, products and refactorisation of the
//!   factored posterior.
//! - [`metrics`]: OSPA, the track base distance and OSPA(2), dense and sparse.
//! - [`sim`]: ground truth and measurement generation.
//! - [`engine`]: the tracker loop tying the above together.
//! - [`io`]: line-delimited JSON and CSV file formats.

pub mod engine;
pub mod error;
pub mod factor;
pub mod glmb;
pub mod hash;
pub mod io;
pub mod label;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod partition;
pub mod sim;
pub mod update;

pub use error::{Error, Result};
pub use factor::FactoredGlmb;
pub use glmb::{CardinalityDistribution, GlmbComponent, HistoryId, LabeledGlmb};
pub use label::Label;
pub use linalg::{Measurement, SingleObjectDensity, State};
