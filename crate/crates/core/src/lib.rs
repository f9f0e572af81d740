//! Latent-class (aspect) models for recommending documents from access logs,
//! optionally combined with document content.
//!
//! The pipeline: [`corpus`] turns access logs and document texts into count
//! matrices, [`textproc`] and [`smoothing`] derive tf-idf vectors and
//! similarity-smoothed access matrices, [`aspect`] fits and scores the models,
//! [`knn`] is the neighbourhood baseline, and [`eval`] computes the half-life
//! rank score. [`synth`] generates block-structured data with known groups.

pub mod aspect;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod knn;
pub mod smoothing;
pub mod sparse;
pub mod synth;
pub mod textproc;

pub use aspect::{AspectModel, ModelKind, ObservationSet, TrainConfig};
pub use corpus::Corpus;
pub use error::{Error, Result};
pub use sparse::SparseCounts;
