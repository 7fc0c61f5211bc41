//! Goodness-of-fit tests built on degenerate V- and U-statistics whose
//! kernels come from equidistribution characterizations, with a plug-in
//! estimate of the nuisance parameter.
//!
//! Pipeline: [`model`] describes a test, [`stat_engine`] evaluates the
//! statistic, [`spectral`] discretizes the limiting integral operator,
//! [`limitdist`] samples the weighted χ² limit, [`simulate`] checks the
//! whole chain by Monte Carlo.

pub mod cli;
pub mod error;
pub mod kernels;
pub mod limitdist;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod spectral;
pub mod stat_engine;

pub use error::{Error, Result};
