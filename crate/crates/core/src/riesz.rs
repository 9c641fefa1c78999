//! Lasso-penalized Riesz representer for the treatment score
//! `omega(x) = d log f(x1 | x_-1) / d x1`.
//!
//! Integration by parts gives `E[h(X) omega(X)] = -E[d h(X) / d x1]`, so
//! with `G = E[h h']` and `M = -E[d h / d x1]` the coefficients solve
//! `min_rho -2 M'rho + rho' G rho + lambda |rho|_1`.

use crate::basis::{BasisExpansion, DerivativeDesign};
use crate::error::{Result, UqpeError};
use crate::matrix::{dot, ColMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `2 log(log N) sqrt(log(p_h) / N)`.
pub fn lambda_riesz(n: usize, ph: usize) -> Result<f64> {
    if n < 3 || ph < 2 {
        return Err(UqpeError::InvalidConfig(format!(
            "lambda_riesz needs N >= 3 and p_h >= 2 (got N={n}, p_h={ph})"
        )));
    }
    let nf = n as f64;
    Ok(2.0 * nf.ln().ln() * ((ph as f64).ln() / nf).sqrt())
}

/// Sample moments of the quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszMoments {
    /// Row-major `p_h x p_h` matrix `N^-1 sum h h'`.
    pub gram: Vec<f64>,
    /// `-N^-1 sum d h / d x1`.
    pub m: Vec<f64>,
}

impl RieszMoments {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    #[inline]
    pub fn g(&self, j: usize, k: usize) -> f64 {
        self.gram[j * self.m.len() + k]
    }
}

/// `G = N^-1 H'H` and `M = -(column means of dH)`.
pub fn compute_moments(h: &ColMatrix, dh: &ColMatrix) -> Result<RieszMoments> {
    if h.nrows() != dh.nrows() || h.ncols() != dh.ncols() {
        return Err(UqpeError::Dimension {
            expected: h.ncols(),
            got: dh.ncols(),
        });
    }
    if !h.all_finite() || !dh.all_finite() {
        return Err(UqpeError::NonFinite("riesz dictionary"));
    }
    let m = (0..dh.ncols()).map(|j| -mean(dh.col(j))).collect();
    Ok(RieszMoments { gram: gram(h), m })
}

/// Same as [`compute_moments`] but with the sparse treatment derivative.
pub fn compute_moments_sparse(h: &ColMatrix, dh: &DerivativeDesign) -> Result<RieszMoments> {
    if h.nrows() != dh.nrows() || h.ncols() != dh.ncols() {
        return Err(UqpeError::Dimension {
            expected: h.ncols(),
            got: dh.ncols(),
        });
    }
    if !h.all_finite() {
        return Err(UqpeError::NonFinite("riesz dictionary"));
    }
    let mut m = vec![0.0; h.ncols()];
    for (k, c) in dh.nonzero_columns() {
        if !c.iter().all(|v| v.is_finite()) {
            return Err(UqpeError::NonFinite("riesz derivative dictionary"));
        }
        m[*k] = -mean(c);
    }
    Ok(RieszMoments { gram: gram(h), m })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn gram(h: &ColMatrix) -> Vec<f64> {
    let p = h.ncols();
    let nf = h.nrows() as f64;
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|j| (j..p).map(|k| dot(h.col(j), h.col(k)) / nf).collect())
        .collect();
    let mut g = vec![0.0; p * p];
    for (j, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let k = j + off;
            g[j * p + k] = v;
            g[k * p + j] = v;
        }
    }
    g
}

/// `-2 M'rho + rho' G rho + lambda |rho|_1`
pub fn riesz_objective(moments: &RieszMoments, rho: &[f64], lambda: f64) -> f64 {
    let p = moments.dim();
    let mut quad = 0.0;
    for j in 0..p {
        if rho[j] != 0.0 {
            quad += rho[j] * dot(&moments.gram[j * p..(j + 1) * p], rho);
        }
    }
    -2.0 * dot(&moments.m, rho) + quad + lambda * rho.iter().map(|r| r.abs()).sum::<f64>()
}

/// Largest violation of `|2M_j - 2(G rho)_j| <= lambda` (zero coordinates)
/// and `2M_j - 2(G rho)_j = lambda sign(rho_j)` (nonzero coordinates).
pub fn riesz_kkt_violation(moments: &RieszMoments, rho: &[f64], lambda: f64) -> f64 {
    let p = moments.dim();
    (0..p)
        .map(|j| {
            let s = 2.0 * moments.m[j] - 2.0 * dot(&moments.gram[j * p..(j + 1) * p], rho);
            if rho[j] == 0.0 {
                (s.abs() - lambda).max(0.0)
            } else {
                (s - lambda * rho[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RieszFit {
    #[serde(with = "crate::sparse")]
    pub rho: Vec<f64>,
    pub lambda: f64,
    pub gram_diag: Vec<f64>,
    pub support: Vec<usize>,
    pub converged: bool,
    pub sweeps: usize,
    /// Coordinates with a zero Gram diagonal but a nonzero moment.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct RieszOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for RieszOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

/// Cyclic coordinate descent in the natural order.
pub fn fit_riesz(moments: &RieszMoments, lambda: f64) -> RieszFit {
    let order: Vec<usize> = (0..moments.dim()).collect();
    fit_riesz_ordered(moments, lambda, &order, RieszOptions::default())
}

/// Coordinate descent visiting coordinates in `order`. Each update is the
/// exact minimizer `rho_j = S(M_j - sum_{k != j} G_jk rho_k, lambda / 2) / G_jj`.
pub fn fit_riesz_ordered(moments: &RieszMoments, lambda: f64, order: &[usize], opts: RieszOptions) -> RieszFit {
    let p = moments.dim();
    let half = 0.5 * lambda;
    let mut rho = vec![0.0; p];
    // grho = G rho, kept in sync with rho.
    let mut grho = vec![0.0; p];
    let gram_diag: Vec<f64> = (0..p).map(|j| moments.g(j, j)).collect();
    let skipped: Vec<usize> = (0..p).filter(|&j| gram_diag[j] <= 0.0 && moments.m[j] != 0.0).collect();

    let update = |j: usize, rho: &mut [f64], grho: &mut [f64]| -> f64 {
        let gjj = gram_diag[j];
        if gjj <= 0.0 {
            return 0.0;
        }
        let partial = moments.m[j] - (grho[j] - gjj * rho[j]);
        let new = soft_threshold(partial, half) / gjj;
        let change = new - rho[j];
        if change != 0.0 {
            rho[j] = new;
            let row = &moments.gram[j * p..(j + 1) * p];
            for (g, &gjk) in grho.iter_mut().zip(row) {
                *g += change * gjk;
            }
        }
        change.abs()
    };

    let mut sweeps = 0;
    let mut converged = false;
    let mut active = Vec::new();
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        active.clear();
        for &j in order {
            max_change = max_change.max(update(j, &mut rho, &mut grho));
            if rho[j] != 0.0 {
                active.push(j);
            }
        }
        if max_change < opts.tol {
            converged = true;
            break;
        }
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut m = 0.0f64;
            for &j in &active {
                m = m.max(update(j, &mut rho, &mut grho));
            }
            if m < opts.tol {
                break;
            }
        }
    }
    let support = rho
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != 0.0)
        .map(|(j, _)| j)
        .collect();
    RieszFit {
        rho,
        lambda,
        gram_diag,
        support,
        converged,
        sweeps,
        skipped,
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `omega_hat(x) = h(x)' rho`.
pub fn predict_omega(fit: &RieszFit, basis: &BasisExpansion, x: &[f64]) -> Result<f64> {
    let h = basis.evaluate(x)?;
    if h.len() != fit.rho.len() {
        return Err(UqpeError::Dimension {
            expected: fit.rho.len(),
            got: h.len(),
        });
    }
    Ok(dot(&h, &fit.rho))
}

/// `omega_hat` at every row of an evaluated dictionary.
pub fn predict_omega_design(fit: &RieszFit, h: &ColMatrix) -> Vec<f64> {
    h.mul_vec(&fit.rho)
}
