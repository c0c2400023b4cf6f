//! Time-to-failure prediction for process equipment from event logs.
//!
//! The crate covers the whole pipeline: a seeded plant simulator ([`sim`]), JSONL
//! ingestion ([`ingest`]), TTF / health / interval labeling ([`labeling`]),
//! per-recipe standardization and correlation pruning ([`preprocess`]), penalty
//! weighted event features ([`features`]), a from-scratch model zoo ([`models`])
//! and grouped cross-validation against human-judgment benchmarks
//! ([`evalbench`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the precision the pipeline runs at.

pub mod config;
pub mod evalbench;
pub mod features;
pub mod ingest;
pub mod labeling;
pub mod linalg;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod sim;

pub use scalar::Scalar;

/// Precision used by the pipeline.
pub type Real = f64;
pub type Matrix = linalg::DenseMatrix<Real>;
pub type MatrixF32 = linalg::DenseMatrix<f32>;
pub type Features = features::FeatureMatrix<Real>;
pub type Model = models::TrainedModel<Real>;
pub type ModelF32 = models::TrainedModel<f32>;
