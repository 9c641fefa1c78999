//! Standard normal and logistic helpers.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::sync::OnceLock;

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(Normal::standard)
}

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// Standard normal quantile function.
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `Phi^{-1}(0.75) - Phi^{-1}(0.25)`, the interquartile range of N(0, 1).
pub fn normal_iqr() -> f64 {
    phi_inv(0.75) - phi_inv(0.25)
}

/// Logistic CDF.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic CDF, `L(z)(1 - L(z))`.
#[inline]
pub fn logistic_density(z: f64) -> f64 {
    let p = logistic(z);
    p * (1.0 - p)
}

/// Inverse of the logistic CDF.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
