//! Debiased estimation and multiplier-bootstrap inference for the
//! unconditional quantile partial effect (UQPE) with many controls.
//!
//! The estimator combines post-lasso logistic fits of
//! `m0(x, q) = P(Y <= q | X = x)` over a grid of thresholds, a lasso
//! Riesz representer for `omega(x) = d log f(x1 | x_-1) / d x1`, and a
//! kernel density estimate of `f_Y`:
//!
//! ```text
//! theta(q) = mean[ m1(X, q) - omega(X) (1{Y <= q} - m0(X, q)) ]
//! UQPE(tau) = -theta(q_tau) / f_Y(q_tau)
//! ```
//!
//! [`estimate_all`] runs the full pipeline; [`simulation`] holds the
//! Gaussian designs and the Monte Carlo harness.

pub mod basis;
pub mod bootstrap;
pub mod data;
pub mod density;
pub mod error;
pub mod estimator;
pub mod lasso_logit;
pub mod logistic;
pub mod matrix;
pub mod normal;
pub mod riesz;
pub mod rng;
pub mod score;
pub mod simulation;
mod sparse;

pub use basis::BasisExpansion;
pub use data::{ingest_csv, Dataset, Ingested};
pub use error::{Result, Stage, UqpeError};
pub use estimator::{estimate_all, estimate_variants, Estimator, UqpeConfig, UqpeEstimate};
