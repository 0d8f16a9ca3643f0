//! Gradient-based ridge approximation of vector-valued functions under
//! Gaussian input measures.
//!
//! The pipeline is: estimate the gradient Gram matrix `H = E[J(X)ᵀ R_V J(X)]`
//! by Monte Carlo ([`ridge::estimate_h`]), minimise the Poincaré error bound
//! `trace(Σ(I−Pᵀ)H(I−P))` over rank-r projectors through the generalized
//! eigenproblem of `(H, Σ⁻¹)` ([`ridge::optimal_projector`]), and build the
//! conditional-expectation ridge profile ([`ridge::RidgeApproximation`]).
//! Karhunen-Loève truncation ([`gaussian::GaussianMeasure::kl_projector`]) and
//! Sobol'/DGSM sensitivity bounds ([`sensitivity`]) are provided for comparison,
//! along with analytical models and a small elliptic PDE test problem ([`pde`]).
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled
//! (default). Results never depend on the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod pde;
pub mod projector;
pub mod ridge;
pub mod sensitivity;

pub use error::{Error, Result};
pub use exec::Execution;
pub use gaussian::{GaussianMeasure, SampleStream};
pub use linalg::{GeneralizedEigenPairs, SpdMatrix, SymEig};
pub use model::VectorValuedModel;
pub use projector::RankRProjector;

/// Crate version, recorded in experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
