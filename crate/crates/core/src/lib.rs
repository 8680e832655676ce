//! Exact and scalable MCMC for Bayesian logistic classification.
//!
//! The library provides one model (logit link, zero-mean Gaussian prior)
//! and several ways to sample its posterior:
//!
//! - [`samplers::mh_run`] — random-walk Metropolis against the exact
//!   posterior, with the likelihood evaluated over fixed blocks on any
//!   number of workers (results are bitwise independent of the worker
//!   count);
//! - [`samplers::subsampling_mh_run`] — Metropolis against the case-control
//!   approximate posterior; fast, but the target is approximate;
//! - [`samplers::two_stage_mh_run`] — delayed acceptance: proposals are
//!   screened by the approximate posterior and only promoted proposals pay
//!   for an exact evaluation, while the chain still targets the exact
//!   posterior;
//! - [`consensus::run_consensus`] — independent chains on random data
//!   partitions with down-weighted priors, combined by inverse-covariance
//!   weighted averaging; partitions can run either kernel.
//!
//! [`data`] handles CSV ingestion with schema-driven indicator encoding,
//! synthetic sparse-outcome generation, and chain serialization. All
//! randomness flows from per-run master seeds through [`seeds::derive_seed`].

pub mod consensus;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod samplers;
pub mod seeds;

pub use error::{Error, Result};
