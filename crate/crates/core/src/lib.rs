//! Gaussian-process interpolation with a catalog of parameter-selection
//! criteria.
//!
//! The crate provides:
//! - an anisotropic Matérn covariance family with half-integer regularity
//!   and the squared-exponential limit ([`kernel`]),
//! - exact zero-mean GP prediction and fast leave-one-out predictive
//!   distributions ([`gp`]),
//! - scoring rules for Gaussian predictive distributions ([`scoring`]),
//! - likelihood-based, cross-validation and Hölderized-likelihood selection
//!   criteria ([`criteria`]),
//! - hand-coded reverse-mode gradients for all criteria and for test-set
//!   scores ([`gradients`]),
//! - bounded multi-start quasi-Newton fitting and discrete model selection
//!   over the regularity ([`selection`]),
//! - benchmark test functions and design generation ([`testfns`], [`design`]),
//! - a benchmark campaign harness with variance decomposition ([`campaign`]).

pub mod campaign;
pub mod criteria;
pub mod design;
mod error;
pub mod gp;
pub mod gradients;
pub mod kernel;
pub mod optim;
pub mod scoring;
pub mod selection;
pub mod testfns;

pub use error::GpError;
pub use gp::{Dataset, GaussianPredictive, GpFactorization};
pub use kernel::{MaternParams, Regularity};
pub use scoring::ScoringRule;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, GpError>;
