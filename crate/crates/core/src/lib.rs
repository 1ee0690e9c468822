//! k-means lab: batch, online and mini-batch k-means on dense or sparse data,
//! with the diagnostics needed to study their convergence.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kmeans;
pub mod lloyd;
pub mod matching;
pub mod rng;
pub mod seeding;
pub mod stochastic;
pub mod theory;

pub use error::{Error, Result};
