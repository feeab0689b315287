//! Analytics over design traces: code vectors, consensus clustering,
//! exploration/exploitation classification against a GP-UCB baseline,
//! convergence curves, and token and cost accounting.

pub mod bo;
pub mod clustering;
pub mod compile;
pub mod convergence;
pub mod cost;
pub mod efficiency;
pub mod hull;
pub mod pca;
pub mod phi;
pub mod vectorize;

use thiserror::Error;

pub use clustering::{consensus_cluster, kmeans, ConsensusClustering};
pub use phi::{classify_phi, classify_strategist, Label};
pub use vectorize::{vectorize_corpus, CodeVector, Corpus};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{0} requires at least one input")]
    Empty(&'static str),
    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("{0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

pub(crate) fn check_dims(points: &[Vec<f64>], d: usize) -> Result<()> {
    match points.iter().find(|p| p.len() != d) {
        Some(p) => Err(AnalysisError::Dimension { expected: d, got: p.len() }),
        None => Ok(()),
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
