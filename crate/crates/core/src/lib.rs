//! Fully conjugate Gibbs sampling for heteroskedastic regression.
//!
//! Both the mean and the log-variance are linear mixed predictors. Mean
//! coefficients carry Normal priors; variance coefficients carry
//! multivariate log-Gamma priors, which keeps every full conditional in a
//! closed family (Normal, Inverse-Gamma, conditional MLG, Inverse-Gaussian).
//!
//! The crate is `no_std` with `alloc`. File formats, the CLI, and threaded
//! chain orchestration live in the `hetgibbs` companion crate.

#![no_std]

extern crate alloc;

pub mod design;
pub mod error;
pub mod esvm;
pub mod evaluation;
pub mod gibbs;
pub mod linalg;
pub mod mlg;
pub mod random;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
