//! Item-item collaborative filtering with a Gaussian Markov random field.
//!
//! The weight matrix `B` is learned by maximizing a decoupled
//! pseudo-likelihood with an L2 penalty and a zero-diagonal constraint. Two
//! estimators are provided:
//!
//! * [`dense`]: the exact closed form `B_ji = -C_ji / C_ii` with
//!   `C = S_lambda^-1`, plus a variant constrained by the item-mean vector.
//! * [`sparse`]: a thresholded sparsity pattern followed by block-wise
//!   submatrix inversions, trading accuracy for training time via `r`.
//!
//! Surrounding plumbing covers ingestion and strong-generalization splits
//! ([`ingest`]), column scaling and the regularized Gram matrix
//! ([`preprocess`]), scoring ([`scoring`]), ranking metrics ([`metrics`]) and
//! the on-disk model format ([`model`]).

// NaN-rejecting range checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod scoring;
pub mod sparse;
pub mod weights;

pub use error::{Error, ErrorCategory, Result};
pub use ingest::{EvalSplit, HeldOutUser, IdMap, InteractionMatrix, LoadOptions};
pub use preprocess::{GramMatrix, PreprocessStats, TransformedMatrix};
pub use weights::{SolverKind, WeightMatrix};
