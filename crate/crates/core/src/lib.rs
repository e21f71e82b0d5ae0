//! One-unit FastICA: population fixed-point analysis, the empirical
//! algorithm, and Monte Carlo experiments on spurious solutions.

// `!(x >= tol)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod distributions;
pub mod empirical;
pub mod error;
pub mod experiment;
pub mod fixed_points;
pub mod linalg;
pub mod nonlinearity;
pub mod population;
pub mod quadrature;

pub use distributions::{DistributionSpec, MomentSet};
pub use error::{IcaError, Result};
pub use nonlinearity::Nonlinearity;
