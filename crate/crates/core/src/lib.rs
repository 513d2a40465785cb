//! Matching estimators for outcome-unit-specific causal effects under
//! bipartite interference with time-series data.
//!
//! The crate is organised along the analysis pipeline:
//!
//! * [`data`] holds the panel container, validation and balance covariates.
//! * [`exposure`] maps treatments and the bipartite network to binary exposures.
//! * [`matcher`] solves the 1-1, 1-2 and 1-1/2 constrained matching programs.
//! * [`estimator`] turns matches into effect estimates and bias bounds.
//! * [`inference`] provides Wald intervals and the FDR-corrected global test.
//! * [`simulator`] generates the confounding scenarios and runs Monte-Carlo studies.
//! * [`io`] reads and writes the long CSV formats.

pub mod data;
pub mod error;
pub mod estimator;
pub mod exposure;
pub mod inference;
pub mod io;
pub mod matcher;
pub mod normal;
pub mod reproduce;
pub mod simulator;

pub use error::{Error, Result};
