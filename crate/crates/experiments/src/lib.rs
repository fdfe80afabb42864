//! Rate experiments, property suites and the `rsmf` command-line tool.
//!
//! - [`config`]: JSON experiment configs.
//! - [`harness`]: error curves and log-log slope fits.
//! - [`retraction_order`]: distance-to-exponential slopes.
//! - [`invariants`]: geometry and noise property suite.
//! - [`pca`]: RSGD on Stiefel PCA.
//! - [`cli`]: the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod invariants;
pub mod output;
pub mod pca;
pub mod retraction_order;

pub use error::{ExperimentError, Result};
