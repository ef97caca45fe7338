//! Error type shared by every module.

use thiserror::Error;

use crate::fullrank::SinkhornOutput;

/// Failures reported by solvers, generators and validators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("marginal mismatch: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Marginal { residual: f64, tolerance: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("label {label} out of range for K = {k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("square cost required, got {n}x{m}")]
    Rectangular { n: usize, m: usize },

    #[error("zero mass at index {0}")]
    ZeroMass(usize),

    #[error("K = {k} exceeds n = {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("dense materialization of {n}x{m} exceeds the threshold of {limit} entries")]
    TooDense { n: usize, m: usize, limit: usize },

    #[error("sinkhorn stopped after {iterations} iterations with residual {residual:.3e}")]
    NonConvergence {
        residual: f64,
        iterations: usize,
        output: Box<SinkhornOutput>,
    },

    #[error("gkms step failed to decrease the cost after {halvings} halvings")]
    StepFailure { halvings: usize },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("graph still disconnected after {0} samples")]
    Disconnected(usize),

    #[error("feasibility violation: residual {0:.3e}")]
    Infeasible(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
