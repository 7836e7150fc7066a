//! Gaussian random fields on closed curves in biorthogonal wavelet coordinates.
//!
//! The crate assembles Matérn covariance operators on a parametrized curve in a
//! periodic CDF(2, d̃) spline wavelet basis and uses the resulting matrices for
//! compression, diagonal preconditioning, contour-integral sampling, multilevel
//! Monte Carlo covariance estimation and compressed kriging.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod compression;
pub mod error;
pub mod io;
pub mod kernel;
pub mod kriging;
pub mod manifold;
pub mod matrix;
pub mod mlmc;
pub mod mra;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod util;

pub use error::{Error, Result};
