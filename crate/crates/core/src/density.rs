//! Empirical quantiles, kernel density estimation and the closed-form
//! multiplier-bootstrap quantile.

use crate::error::{Result, UqpeError};
use serde::{Deserialize, Serialize};

/// Index (1-based) of the type-1 quantile order statistic, `ceil(n * tau)`
/// clamped to `[1, n]`.
pub fn order_statistic_rank(n: usize, tau: f64) -> usize {
    // A relative guard keeps exact products such as 5 * 0.2 from rounding up.
    let x = n as f64 * tau;
    let r = (x - 1e-12 * x.abs().max(1.0)).ceil();
    (r.max(1.0) as usize).min(n)
}

/// Type-1 quantile of an already sorted slice.
pub fn sorted_quantile(sorted: &[f64], tau: f64) -> f64 {
    sorted[order_statistic_rank(sorted.len(), tau) - 1]
}

/// The `ceil(N tau)`-th order statistic of `y`.
pub fn empirical_quantile(y: &[f64], tau: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(UqpeError::InvalidConfig("empty sample".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(UqpeError::InvalidConfig(format!("tau {tau} outside (0, 1)")));
    }
    Ok(sorted_quantile(&sorted(y), tau))
}

pub(crate) fn sorted(y: &[f64]) -> Vec<f64> {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Sample standard deviation with denominator `n - 1`.
pub fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Under-smoothed rule-of-thumb bandwidth `1.06 sd(Y) N^(-1/5 - 0.01)`.
pub fn bandwidth_rot(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(UqpeError::InvalidConfig(
            "bandwidth needs at least 2 observations".into(),
        ));
    }
    let sd = sample_sd(y);
    if !(sd > 0.0) {
        return Err(UqpeError::ZeroBandwidth);
    }
    Ok(1.06 * sd * (y.len() as f64).powf(-0.21))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    Epanechnikov,
}

impl KernelSpec {
    pub fn support_radius(self) -> f64 {
        1.0
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelSpec::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

/// `N^-1 sum h^-1 K((Y_i - y) / h)`.
pub fn kde(y: &[f64], at: f64, h1: f64, kernel: KernelSpec) -> f64 {
    let s: f64 = y.iter().map(|&yi| kernel.eval((yi - at) / h1)).sum();
    s / (y.len() as f64 * h1)
}

/// Kernel density estimate with weights normalized by their sum. Weights
/// may be negative, so the result can be negative.
pub fn weighted_kde(y: &[f64], weights: &[f64], at: f64, h1: f64, kernel: KernelSpec) -> Result<f64> {
    if weights.len() != y.len() {
        return Err(UqpeError::Dimension {
            expected: y.len(),
            got: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total.abs() <= y.len() as f64 * 1e-9 {
        return Err(UqpeError::DegenerateWeights);
    }
    let s: f64 = y
        .iter()
        .zip(weights)
        .map(|(&yi, &w)| w * kernel.eval((yi - at) / h1))
        .sum();
    Ok(s / (total * h1))
}

/// Rank of the bootstrap quantile, together with a flag recording whether
/// it had to be clamped into `[1, N]`.
///
/// The perturbed check-loss `sum rho_tau(Y_i - q) - q S`, with
/// `S = sum eta_i (tau - 1{Y_i <= q_hat})`, is minimized by every order
/// statistic of rank `r` with `N tau + S <= r <= N tau + S + 1`. We return
/// the smallest such rank, `ceil(N tau + S)`.
pub fn bootstrap_rank(y: &[f64], tau: f64, q_hat: f64, eta: &[f64]) -> (usize, bool) {
    let n = y.len();
    let s: f64 = y
        .iter()
        .zip(eta)
        .map(|(&yi, &e)| e * (tau - if yi <= q_hat { 1.0 } else { 0.0 }))
        .sum();
    rank_from_shift(n, tau, s)
}

pub(crate) fn rank_from_shift(n: usize, tau: f64, s: f64) -> (usize, bool) {
    let x = n as f64 * tau + s;
    let r = (x - 1e-12 * x.abs().max(1.0)).ceil();
    if r < 1.0 {
        (1, true)
    } else if r > n as f64 {
        (n, true)
    } else {
        (r as usize, false)
    }
}

/// Gradient-bootstrap quantile: the order statistic selected by
/// [`bootstrap_rank`].
pub fn bootstrap_quantile(y: &[f64], tau: f64, q_hat: f64, eta: &[f64]) -> Result<f64> {
    if eta.len() != y.len() {
        return Err(UqpeError::Dimension {
            expected: y.len(),
            got: eta.len(),
        });
    }
    if y.is_empty() {
        return Err(UqpeError::InvalidConfig("empty sample".into()));
    }
    let (r, _) = bootstrap_rank(y, tau, q_hat, eta);
    Ok(sorted(y)[r - 1])
}
