//! Solver toolkit for dividend, reinsurance and capital-injection
//! control of an insurer's surplus in the Cramér-Lundberg model.
//!
//! Three engines compute and cross-validate the value of band policies
//! `(alpha, a, b)`: retain a fraction `alpha` of every claim, repair
//! deficits shallower than `a` by capital injections at proportional
//! cost `k`, pay out everything above the barrier `b` as dividends:
//!
//! - [`closedform`]: exact scale-function formulas and the optimal
//!   triple, for exponential claim sizes;
//! - [`hjb`]: an upwind finite-difference discretization of the dynamic
//!   programming equation solved by policy iteration, for general claim
//!   laws;
//! - [`sim`]: an event-driven Monte Carlo simulator of the controlled
//!   surplus, unbiased up to an explicitly certified horizon truncation.
//!
//! All numeric kernels are generic over the scalar type via [`scalar::Real`];
//! the aliases below fix the two floating-point instantiations.

// Validation guards are written `!(x > 0)` on purpose: the negation
// also rejects NaN, which a `x <= 0` rewrite would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closedform;
pub mod config;
pub mod hjb;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

/// `f64` instantiations: the default precision, used by the CLI and
/// required by the certified tolerances.
pub type ModelParams64 = model::ModelParams<f64>;
pub type ClaimLaw64 = model::ClaimLaw<f64>;
pub type ClosedFormPolicy64 = closedform::ClosedFormPolicy<f64>;
pub type HjbSolution64 = hjb::HjbSolution<f64>;
pub type Strategy64 = sim::Strategy<f64>;
pub type SimOutcome64 = sim::SimOutcome<f64>;

/// `f32` instantiations compile and run, at reduced accuracy.
pub type ModelParams32 = model::ModelParams<f32>;
pub type ClaimLaw32 = model::ClaimLaw<f32>;
pub type ClosedFormPolicy32 = closedform::ClosedFormPolicy<f32>;
pub type HjbSolution32 = hjb::HjbSolution<f32>;
pub type Strategy32 = sim::Strategy<f32>;
pub type SimOutcome32 = sim::SimOutcome<f32>;
