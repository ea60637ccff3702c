//! Counterfactual influence estimation by subsampled retraining of small
//! deterministic models, and the distribution-level analyses built on it.
//!
//! The numeric core ([`scalar`], [`matrix`], [`influence`], [`stats`]) is
//! generic over the scalar type; the aliases below fix it to `f64`.

pub mod binfmt;
pub mod cli;
pub mod corpus;
pub mod data;
pub mod duplicates;
pub mod error;
pub mod extraction;
pub mod influence;
pub mod learners;
pub mod matrix;
pub mod partition;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};

pub type InfluenceMatrix = influence::InfluenceMatrixOf<f64>;
pub type ExactInfluenceMatrix = influence::InfluenceMatrixOf<num_rational::Rational64>;
pub type Margin = stats::Margin<f64>;
pub type TargetSummary = stats::TargetSummary<f64>;
pub type Candidate = duplicates::Candidate<f64>;
pub type Matrix = matrix::Matrix<f64>;
