//! Bayesian jackknife pseudo-empirical likelihood for U-statistic
//! parameters under unequal-probability survey sampling.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`ustat`]: U-statistics and jackknife pseudo-values;
//! * [`elcore`]: the inner EL problem (Lagrange multipliers, profile log-EL);
//! * [`design`]: sampling designs, weights, calibration and design effects;
//! * [`bjel`]: posteriors, credible intervals and the JEL comparators;
//! * [`simharness`]: finite populations and coverage studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bjel;
pub mod design;
pub mod elcore;
pub mod error;
mod linalg;
pub mod simharness;
pub mod ustat;

pub use error::{Error, Result};
