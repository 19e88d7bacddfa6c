//! Maximum-likelihood estimation for the destructive negative-binomial cure
//! rate model with Weibull progression times.
//!
//! - [`model`]: links, Weibull, count distributions, population survival.
//! - [`likelihood`]: log-likelihood, analytic gradient, projection.
//! - [`optimizer`]: projected nonlinear conjugate gradient ascent.
//! - [`simulation`]: synthetic data and Monte Carlo bias/RMSE studies.
//! - [`inference`]: bootstrap standard errors.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod optimizer;
pub mod simulation;

pub use error::{Error, Result};
pub use inference::{bootstrap_se, BootstrapResult};
pub use likelihood::{grad_log_likelihood, is_feasible, log_likelihood, project};
pub use model::{Dataset, ParamVector, Subject};
pub use optimizer::{fit, FitResult, OptimizerConfig, Status, Variant};
pub use simulation::{run_mc_study, McReport, SimSetting};
