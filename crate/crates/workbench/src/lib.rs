//! Reproductions, attack experiments and reporting on top of the core,
//! provider and attack crates.
//!
//! - [`ce`] and [`swiss`]: the counter-examples;
//! - [`experiments`]: end-to-end attacks, the DP sweep, membership and attribute inference;
//! - [`spec`]: TOML experiment specs;
//! - [`report`]: run reports as JSON, tidy CSV and text.

pub mod ce;
pub mod error;
pub mod experiments;
pub mod report;
pub mod spec;
pub mod swiss;

pub use error::{Result, WorkbenchError};
pub use report::RunReport;
pub use spec::ExperimentSpec;
