//! Uncertainty quantification engine for scientific machine learning.
//!
//! The crate builds up in layers:
//!
//! 1. [`autodiff`] — scalar reverse-mode tape and forward Taylor jets.
//! 2. [`surrogates`] — parametric function approximators (feedforward nets,
//!    constants, operator networks, frozen generators) evaluated generically
//!    over plain values, tape variables, or jets.
//! 3. [`processes`] — a surrogate paired with a description of how its
//!    parameters are treated (sampled, variational, or trained).
//! 4. [`likelihoods`] — datasets, physics residuals, and the joint densities
//!    / losses that tie processes to observations.
//! 5. [`inference`] — samplers, variational optimization, and ensembles, all
//!    producing a common posterior-samples representation.
//! 6. [`uq_stats`] — predictive moments, error metrics, and variance
//!    calibration.
//! 7. [`problems`] — a catalog of ready-made benchmark problems with seeded
//!    dataset generation and reference solutions.
//!
//! Everything is generic over the floating dtype via [`Real`]; the `*64`
//! aliases at the crate root fix `f64` for downstream convenience.

pub mod autodiff;
pub mod inference;
pub mod likelihoods;
pub mod processes;
pub mod scalar;
pub mod surrogates;
pub mod uq_stats;
pub mod problems;

pub use scalar::{Real, Scalar};

/// Reverse-mode tape over `f64`.
pub type Tape64 = autodiff::Tape<f64>;
/// Tape variable over `f64`.
pub type Var64<'t> = autodiff::Var<'t, f64>;
/// Order-3 jet of `f64` (coefficient slots for value and three derivatives).
pub type Jet64 = autodiff::Jet<f64, 4>;
