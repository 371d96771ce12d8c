//! Bayesian nowcasting of incurred-but-not-reported counts from
//! reporting-delay triangles.
//!
//! A hierarchical negative-binomial model is fitted to a triangle of
//! incremental counts by adaptive Metropolis sampling. Unobserved cells are
//! completed by posterior-predictive simulation. The [`baselines`] module
//! holds the classical reserving methods the nowcasts are scored against,
//! and [`reserve`] turns nowcasts into monetary tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod eval;
pub mod io;
pub mod mcmc;
pub mod nbmodel;
pub mod nowcast;
pub mod reserve;
pub mod special;
pub mod stats;
pub mod synth;
pub mod triangle;

pub use error::{Error, Result};
pub use mcmc::{ChainConfig, ConvergenceReport, Init, ParamSummary, PosteriorSamples};
pub use nbmodel::{CellParams, Coefficients, ModelParams};
pub use triangle::{IncidentRecord, MaskedTriangle, ReportingTriangle, YearMonth};
