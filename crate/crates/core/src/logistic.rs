//! Logistic-likelihood solvers.
//!
//! * [`solve_l1_logistic`] minimizes
//!   `N^-1 sum [log(1 + e^{z_i}) - y_i z_i] + (lambda / N) sum_j psi_j |beta_j|`
//!   with `z = B beta`, by proximal Newton: each outer step builds the
//!   second-order model of the likelihood at the current iterate and
//!   minimizes model-plus-penalty with cyclic coordinate descent over an
//!   active set, followed by a backtracking line search on the true
//!   objective.
//! * [`logistic_mle`] is a damped Newton solver for the unpenalized (or
//!   ridge-stabilized) likelihood on a small design.
//! * [`glm_irls`] mirrors the classical capped IRLS fit used by the
//!   RIF-Logit baseline.

use crate::matrix::{dot, solve_spd, ColMatrix};
use crate::normal::logistic;

/// Numerically stable `log(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood for linear predictor `z`.
pub fn mean_nll(z: &[f64], y: &[f64]) -> f64 {
    let s: f64 = z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum();
    s / z.len() as f64
}

pub fn l1_penalty(beta: &[f64], lambda: f64, loadings: &[f64], n: usize) -> f64 {
    lambda / n as f64 * beta.iter().zip(loadings).map(|(b, w)| w * b.abs()).sum::<f64>()
}

/// Penalized objective of the weighted-lasso logistic problem.
pub fn l1_logistic_objective(design: &ColMatrix, y: &[f64], beta: &[f64], lambda: f64, loadings: &[f64]) -> f64 {
    mean_nll(&design.mul_vec(beta), y) + l1_penalty(beta, lambda, loadings, y.len())
}

/// Likelihood score `N^-1 sum_i b_ij (y_i - L(z_i))` for every column.
pub fn score(design: &ColMatrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let z = design.mul_vec(beta);
    let resid: Vec<f64> = z.iter().zip(y).map(|(&zi, &yi)| yi - logistic(zi)).collect();
    let n = y.len() as f64;
    (0..design.ncols()).map(|j| dot(design.col(j), &resid) / n).collect()
}

/// Largest violation of the weighted-lasso KKT conditions.
///
/// For `beta_j = 0` the score must satisfy `|s_j| <= lambda psi_j / N`; for
/// `beta_j != 0` it must equal `lambda psi_j sign(beta_j) / N`.
pub fn kkt_violation(design: &ColMatrix, y: &[f64], beta: &[f64], lambda: f64, loadings: &[f64]) -> f64 {
    let n = y.len() as f64;
    score(design, y, beta)
        .iter()
        .zip(beta)
        .zip(loadings)
        .map(|((&s, &b), &w)| {
            let t = lambda * w / n;
            if b == 0.0 {
                (s.abs() - t).max(0.0)
            } else {
                (s - t * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Convergence threshold on the largest coordinate change.
    pub tol: f64,
    /// Budget of full coordinate sweeps.
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub objective: f64,
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

const MIN_CURVATURE: f64 = 1e-12;

/// Weighted-lasso logistic regression by proximal Newton with coordinate
/// descent inner solves. `loadings[j] = 0` leaves coordinate `j` unpenalized.
pub fn solve_l1_logistic(
    design: &ColMatrix,
    y: &[f64],
    lambda: f64,
    loadings: &[f64],
    warm_start: Option<&[f64]>,
    opts: SolverOptions,
) -> SolveOutcome {
    let n = design.nrows();
    let pb = design.ncols();
    let nf = n as f64;
    let thresholds: Vec<f64> = loadings.iter().map(|w| lambda * w / nf).collect();
    let mut beta = warm_start.map_or_else(|| vec![0.0; pb], <[f64]>::to_vec);
    let mut z = design.mul_vec(&beta);
    let mut obj = mean_nll(&z, y) + penalty_from_thresholds(&beta, &thresholds);

    let mut prob = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut wu = vec![0.0; n];
    let mut grad = vec![0.0; pb];
    let mut hdiag = vec![0.0; pb];
    let mut delta = vec![0.0; pb];
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut stalled_steps = 0usize;

    while sweeps < opts.max_sweeps {
        for i in 0..n {
            let p = logistic(z[i]);
            prob[i] = p;
            w[i] = (p * (1.0 - p)).max(MIN_CURVATURE);
            resid[i] = p - y[i];
        }
        let mut bw = vec![0.0; n];
        for j in 0..pb {
            let col = design.col(j);
            grad[j] = dot(col, &resid) / nf;
            for ((t, &b), &wi) in bw.iter_mut().zip(col).zip(&w) {
                *t = b * wi;
            }
            hdiag[j] = dot(&bw, col) / nf;
        }

        // Inner problem: min_d grad'd + d'H d / 2 + pen(beta + d).
        delta.iter_mut().for_each(|d| *d = 0.0);
        wu.iter_mut().for_each(|v| *v = 0.0);
        let inner_tol = 0.1 * opts.tol;
        let mut active: Vec<usize> = Vec::new();
        loop {
            // Full sweep; collect the active set.
            sweeps += 1;
            let mut max_change = 0.0f64;
            active.clear();
            for j in 0..pb {
                let change = cd_update(
                    design,
                    j,
                    &beta,
                    &mut delta,
                    &grad,
                    &hdiag,
                    &thresholds,
                    &w,
                    &mut wu,
                    nf,
                );
                max_change = max_change.max(change);
                if beta[j] + delta[j] != 0.0 {
                    active.push(j);
                }
            }
            if max_change < inner_tol || sweeps >= opts.max_sweeps {
                break;
            }
            // Sweep the active set until it settles.
            for _ in 0..10_000 {
                let mut m = 0.0f64;
                for &j in &active {
                    let change = cd_update(
                        design,
                        j,
                        &beta,
                        &mut delta,
                        &grad,
                        &hdiag,
                        &thresholds,
                        &w,
                        &mut wu,
                        nf,
                    );
                    m = m.max(change);
                }
                if m < inner_tol {
                    break;
                }
            }
        }

        // Line search on the true objective.
        let du = design.mul_vec(&delta);
        let pen_old = penalty_from_thresholds(&beta, &thresholds);
        let trial_pen = |t: f64| -> f64 {
            beta.iter()
                .zip(&delta)
                .zip(&thresholds)
                .map(|((b, d), th)| th * (b + t * d).abs())
                .sum()
        };
        let decrease = dot(&grad, &delta) + trial_pen(1.0) - pen_old;
        let mut t = 1.0;
        let mut accepted = None;
        let mut ztrial = vec![0.0; n];
        for _ in 0..40 {
            for i in 0..n {
                ztrial[i] = z[i] + t * du[i];
            }
            let f = mean_nll(&ztrial, y) + trial_pen(t);
            if f <= obj + 1e-4 * t * decrease {
                accepted = Some(f);
                break;
            }
            t *= 0.5;
        }
        let max_step = delta.iter().map(|d| (t * d).abs()).fold(0.0, f64::max);
        match accepted {
            Some(f) => {
                for (b, d) in beta.iter_mut().zip(&delta) {
                    *b += t * d;
                }
                std::mem::swap(&mut z, &mut ztrial);
                obj = f;
            }
            None => {
                // No decrease in floating point: we sit at the minimum.
                converged = max_step < opts.tol.sqrt();
                break;
            }
        }
        if max_step < opts.tol {
            converged = true;
            break;
        }
        if t < 1.0 {
            stalled_steps += 1;
            if stalled_steps > 200 {
                break;
            }
        }
    }
    SolveOutcome {
        beta,
        converged,
        sweeps,
        objective: obj,
    }
}

fn penalty_from_thresholds(beta: &[f64], thresholds: &[f64]) -> f64 {
    beta.iter().zip(thresholds).map(|(b, t)| t * b.abs()).sum()
}

/// One coordinate update of the inner quadratic model; returns `|change|`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn cd_update(
    design: &ColMatrix,
    j: usize,
    beta: &[f64],
    delta: &mut [f64],
    grad: &[f64],
    hdiag: &[f64],
    thresholds: &[f64],
    w: &[f64],
    wu: &mut [f64],
    nf: f64,
) -> f64 {
    let h = hdiag[j];
    if h <= 0.0 {
        return 0.0;
    }
    let col = design.col(j);
    let g = grad[j] + dot(col, wu) / nf;
    let cur = beta[j] + delta[j];
    let new = soft_threshold(h * cur - g, thresholds[j]) / h;
    let change = new - cur;
    if change != 0.0 {
        delta[j] += change;
        for ((v, &b), &wi) in wu.iter_mut().zip(col).zip(w) {
            *v += change * wi * b;
        }
    }
    change.abs()
}

#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest |linear predictor| at the solution.
    pub max_abs_eta: f64,
}

fn hessian_and_gradient(design: &ColMatrix, y: &[f64], z: &[f64], ridge: f64, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = design.nrows();
    let k = design.ncols();
    let nf = n as f64;
    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];
    for i in 0..n {
        let p = logistic(z[i]);
        w[i] = p * (1.0 - p);
        r[i] = p - y[i];
    }
    let mut hess = design.weighted_gram(&w, nf);
    let mut grad = vec![0.0; k];
    for a in 0..k {
        grad[a] = dot(design.col(a), &r) / nf + ridge * beta[a];
        hess[a * k + a] += ridge;
    }
    (hess, grad)
}

/// Damped Newton for `mean_nll + ridge/2 |beta|^2`.
///
/// Reports `converged = false` when the iterates keep growing, which is the
/// signature of (quasi-)separation.
pub fn logistic_mle(design: &ColMatrix, y: &[f64], ridge: f64, max_iter: usize) -> MleOutcome {
    let k = design.ncols();
    let mut beta = vec![0.0; k];
    let mut z = vec![0.0; design.nrows()];
    let objective = |z: &[f64], beta: &[f64]| mean_nll(z, y) + 0.5 * ridge * dot(beta, beta);
    let mut obj = objective(&z, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let (hess, grad) = hessian_and_gradient(design, y, &z, ridge, &beta);
        let gmax = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if gmax < 1e-12 {
            converged = true;
            break;
        }
        let Some(step) = solve_spd(&hess, &grad) else {
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let zt = design.mul_vec(&trial);
            let f = objective(&zt, &trial);
            if f <= obj {
                beta = trial;
                z = zt;
                obj = f;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        let smax = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        if !moved || smax < 1e-10 {
            converged = moved || gmax < 1e-8;
            break;
        }
    }
    let max_abs_eta = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    MleOutcome {
        beta,
        converged,
        iterations,
        max_abs_eta,
    }
}

/// Classical IRLS for the logit model: full Newton steps, at most
/// `max_iter` iterations, stopping when the relative deviance change
/// drops below `1e-8`. Separated data run to the iteration cap and return
/// the last iterate with `converged = false`.
pub fn glm_irls(design: &ColMatrix, y: &[f64], max_iter: usize) -> MleOutcome {
    let k = design.ncols();
    let n = design.nrows();
    let mut beta = vec![0.0; k];
    let mut z = vec![0.0; n];
    let deviance = |z: &[f64]| 2.0 * n as f64 * mean_nll(z, y);
    let mut dev = deviance(&z);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let (mut hess, grad) = hessian_and_gradient(design, y, &z, 0.0, &beta);
        let trace: f64 = (0..k).map(|a| hess[a * k + a]).sum::<f64>() / k as f64;
        let mut step = solve_spd(&hess, &grad);
        let mut jitter = 1e-12 * trace.max(1e-300);
        while step.is_none() && jitter < trace {
            for a in 0..k {
                hess[a * k + a] += jitter;
            }
            step = solve_spd(&hess, &grad);
            jitter *= 100.0;
        }
        let Some(step) = step else { break };
        for (b, s) in beta.iter_mut().zip(&step) {
            *b -= s;
        }
        design.mul_vec_into(&beta, &mut z);
        let new_dev = deviance(&z);
        if !new_dev.is_finite() {
            break;
        }
        let rel = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        dev = new_dev;
        if rel < 1e-8 {
            converged = true;
            break;
        }
    }
    let max_abs_eta = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    MleOutcome {
        beta,
        converged,
        iterations,
        max_abs_eta,
    }
}
