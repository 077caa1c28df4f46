//! Core building blocks for auditing similarity-based privacy metrics on
//! synthetic tabular data.
//!
//! The crate is split into:
//! - [`tabular`]: typed datasets, generators, splitting, discretization, CSV I/O;
//! - [`mixture`]: diagonal Gaussian mixtures fitted by expectation-maximization;
//! - [`synthesis`]: generative models (oracle, random, independent, PrivBayes-lite)
//!   and the marginal/mutual-information utility score;
//! - [`metrics`]: exact nearest-neighbor kernels, IMS/DCR/NNDR reports and the
//!   similarity and outlier filters.

pub mod error;
pub mod metrics;
pub mod mixture;
pub mod seed;
pub mod synthesis;
pub mod tabular;

pub use error::{Error, Result};
