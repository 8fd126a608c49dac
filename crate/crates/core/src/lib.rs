//! Shape-restricted least squares.
//!
//! Projections onto monotone, unimodal, convex, k-monotone, matrix and
//! partial-order cones; additive and single-index fits; pointwise confidence
//! intervals; and a Monte Carlo laboratory for risk bounds.

pub mod additive;
pub mod cli;
pub mod error;
pub mod inference;
pub mod isotonic;
pub mod partial_order;
pub mod projection;
pub mod risklab;
pub mod shapes;

pub use error::{Result, ShapeError};
pub use projection::{project_cone, verify_projection, ConeSpec, FitResult, Series};
