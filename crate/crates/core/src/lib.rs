//! ReLU-based maximum score (RMS) estimation.
//!
//! Two-step pipeline: fit a first-stage regression `ĥ` of the centered
//! binary outcome, then maximize the ReLU sign-alignment criterion `Q̂(θ)`
//! over the unit sphere. Also provides a joint network estimator, surface
//! integral diagnostics over `{x : x'θ₀ = 0}`, and a Monte Carlo harness.

pub mod adam;
pub mod criterion;
pub mod dgp;
pub mod direction;
pub mod error;
pub mod first_stage;
pub mod harness;
pub mod hyperplane;
pub mod joint_dnn;
pub mod optimizer;
pub mod rng;

pub use direction::{normalize, Direction};
pub use error::{Result, RmsError};
