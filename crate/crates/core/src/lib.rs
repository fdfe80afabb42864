//! Riemannian stochastic gradient descent and its continuum limits.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: embedded-manifold primitives (projections, exponential
//!   maps, retractions, parallel transport, covariant derivatives).
//! - [`calculus`]: gradients, Hessian forms and generator applications for
//!   scalar test functions, plus the one-step Taylor surrogates.
//! - [`noise`]: finite sample spaces, stochastic objectives and the centred
//!   noise / diffusion fields.
//! - [`rsgd`]: the discrete scheme with exact-enumeration and Monte Carlo
//!   expectation oracles.
//! - [`flows`]: gradient-flow ODE and stochastic modified flow SDE integrators.
//! - [`kolmogorov`]: backward Kolmogorov solver on the circle.
//! - [`problems`]: the example objectives.

pub mod calculus;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod kolmogorov;
pub mod noise;
pub mod problems;
pub mod rng;
pub mod rsgd;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Manifold, ManifoldKind, MetricFamily, Point, RetractionScheme, TangentVector};
