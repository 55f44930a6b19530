//! Differentially private Bayesian inference for exponential families.
//!
//! A data owner releases Laplace-noised sufficient statistics
//! ([`mechanisms`]); an analyst recovers a calibrated posterior over the
//! model parameters from that release alone ([`inference`]). Families with
//! unbounded statistics are released after truncation ([`truncation`]).
//! [`evaluation`] reproduces calibration and utility experiments.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod evaluation;
pub mod expfam;
pub mod inference;
pub mod mechanisms;
pub mod parallel;
pub mod rng;
pub mod truncation;

pub use error::{Error, Result};
pub use expfam::{ConjugatePrior, Dataset, Family, HyperParams};
pub use inference::{gibbs_bounded, gibbs_truncated, infer, naive_posterior, Chain, GibbsSettings};
pub use mechanisms::{release_bounded, release_truncated, NoisyRelease};
pub use parallel::Execution;
pub use rng::RngHandle;
pub use truncation::Interval;
