//! Recovery of signals from group-invariant second moments.
//!
//! A signal is a tuple of blocks `X_ℓ ∈ R^{N_ℓ × R_ℓ}`, one per irreducible
//! representation, and the observable is the Gram tuple `(X_ℓᵀ X_ℓ)_ℓ`. The
//! ambiguity group `H = ∏ O(N_ℓ)` acts blockwise on the left. The crate covers
//! the dimension bookkeeping, orbit metrics, priors, stability checks and the
//! end-to-end recovery pipelines.
//!
//! Numerical code is generic over [`real::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar.

pub mod error;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod priors;
pub mod real;
pub mod recovery;
pub mod repspec;
pub mod signal;
pub mod stability;

pub use error::{Error, Result};
pub use repspec::RepSpec;

pub type Signal64 = signal::Signal<f64>;
pub type Signal32 = signal::Signal<f32>;
pub type GramTuple64 = moments::GramTuple<f64>;
pub type GramTuple32 = moments::GramTuple<f32>;
pub type BlockOrthogonal64 = signal::BlockOrthogonal<f64>;
pub type BlockOrthogonal32 = signal::BlockOrthogonal<f32>;
pub type Prior64 = priors::Prior<f64>;
pub type Prior32 = priors::Prior<f32>;
