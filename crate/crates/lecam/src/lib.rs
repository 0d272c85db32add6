//! Solvers for stochastic combinatorial optimization built on compound-Poisson
//! approximation of light-item sums.
//!
//! The library discretizes item size distributions onto a finite grid,
//! summarizes sets of low-mean items by integer *signatures*, and approximates
//! the distribution of a summarized set by a compound Poisson law (Le Cam's
//! theorem gives the total-variation budget `2 Σ πᵢ²`). On top of that
//! substrate sit four solver families:
//!
//! * [`eum`] — expected utility maximization over a fixed-set combinatorial
//!   structure (heavy-set enumeration plus a reachable-signature DP).
//! * [`sbp`] — stochastic bin packing via configuration enumeration, a
//!   rational-simplex feasibility LP, and a merge-based variant that does not
//!   relax the overflow probability.
//! * [`sk`] / [`bosp`] — adaptive stochastic knapsack through block-adaptive
//!   policy trees and a signature-indexed DP, including item groups
//!   (one-per-group constraint), cancelation expansion, Bayesian online
//!   selection with staircase acceptance sets, and the unlimited-copy DP.
//! * [`oracle`] — exact brute-force baselines for all of the above on small
//!   instances.
//!
//! Everything probability-valued is exact `BigRational` arithmetic unless a
//! computation is inherently transcendental (compound Poisson masses), which
//! uses `f64`.

pub mod bosp;
pub mod cpd;
pub mod discretize;
pub mod dist;
pub mod eum;
pub mod grid;
pub mod instance;
pub mod oracle;
pub mod policy;
pub mod rational;
pub mod sbp;
pub mod signature;
pub mod simplex;
pub mod sk;
pub mod structure;
pub mod utility;

pub use dist::DiscreteDistribution;
pub use grid::SizeGrid;
pub use rational::Rational;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("distributions live on different grids")]
    GridMismatch,
    #[error("signatures have different granularity")]
    GranularityMismatch,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("resource cap exceeded: {what} reached {count}")]
    ResourceCap { what: &'static str, count: usize },
    #[error("utility function is not monotone nonincreasing")]
    NonMonotoneUtility,
    #[error("malformed policy tree: {0}")]
    MalformedPolicy(String),
    #[error("diverging value: {0}")]
    Unbounded(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
