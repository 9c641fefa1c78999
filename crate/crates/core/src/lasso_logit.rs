//! Conditional distribution estimates `m0(x, q) = P(Y <= q | X = x)` by
//! weighted-lasso logistic regression with iterated penalty loadings and a
//! post-lasso refit, fitted once over a grid of thresholds.

use crate::basis::{BasisExpansion, DerivativeDesign};
use crate::data::Dataset;
use crate::density::{order_statistic_rank, sorted};
use crate::error::{Result, UqpeError};
use crate::logistic::{glm_irls, logistic_mle, solve_l1_logistic, SolverOptions};
use crate::matrix::{dot, ColMatrix};
use crate::normal::{logistic, phi_inv};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Minimum number of observations required on each side of a threshold.
pub const MIN_SIDE_COUNT: usize = 5;

/// Penalty level `1.1 Phi^-1(1 - (0.1 / log N) / max(p_b, N)) sqrt(N)`.
pub fn lambda_logit(n: usize, pb: usize) -> Result<f64> {
    if n < 3 || pb < 1 {
        return Err(UqpeError::InvalidConfig(format!(
            "lambda_logit needs N >= 3 and p_b >= 1 (got N={n}, p_b={pb})"
        )));
    }
    let nf = n as f64;
    let gamma = (0.1 / nf.ln()) / pb.max(n) as f64;
    Ok(1.1 * phi_inv(1.0 - gamma) * nf.sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitLassoFit {
    pub q: f64,
    #[serde(with = "crate::sparse")]
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub loadings: Vec<f64>,
    pub support: Vec<usize>,
    /// Support of the penalized fit before any refit.
    pub lasso_support: Vec<usize>,
    pub post_lasso: bool,
    pub iterations_used: usize,
    pub converged: bool,
    /// Set when the refit needed the ridge-stabilized fallback.
    #[serde(default)]
    pub ridge_fallback: bool,
}

fn nonzero(beta: &[f64]) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone)]
pub struct LassoLogitOptions {
    /// Number of loading updates `K`.
    pub loading_iterations: usize,
    /// Columns excluded from the penalty (the intercept).
    pub unpenalized: Vec<usize>,
    pub solver: SolverOptions,
}

impl Default for LassoLogitOptions {
    fn default() -> Self {
        Self {
            loading_iterations: 2,
            unpenalized: vec![0],
            solver: SolverOptions::default(),
        }
    }
}

fn check_indicator(y: &[f64]) -> Result<()> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(UqpeError::InvalidConfig("indicator must be 0/1".into()));
    }
    if ones == 0 || ones == y.len() {
        return Err(UqpeError::DegenerateOutcome { ones, n: y.len() });
    }
    Ok(())
}

/// `psi_j = sqrt(N^-1 sum_i r_i^2 b_ij^2)` with unpenalized columns zeroed.
fn loadings_from_residuals(design: &ColMatrix, r2: &[f64], unpenalized: &[usize]) -> Vec<f64> {
    let nf = design.nrows() as f64;
    let mut tmp = vec![0.0; design.nrows()];
    (0..design.ncols())
        .map(|j| {
            if unpenalized.contains(&j) {
                return 0.0;
            }
            let col = design.col(j);
            for ((t, &b), &r) in tmp.iter_mut().zip(col).zip(r2) {
                *t = b * r;
            }
            (dot(&tmp, col) / nf).sqrt()
        })
        .collect()
}

/// Initial loadings `psi0_j = sqrt(N^-1 sum_i 1{Y_i <= q} b_ij^2)`.
pub fn initial_loadings(design: &ColMatrix, y_ind: &[f64], unpenalized: &[usize]) -> Vec<f64> {
    // y_ind is 0/1, so y_ind^2 = y_ind.
    loadings_from_residuals(design, y_ind, unpenalized)
}

/// Loadings built from the residuals of a penalized fit.
pub fn updated_loadings(design: &ColMatrix, y_ind: &[f64], beta: &[f64], unpenalized: &[usize]) -> Vec<f64> {
    let z = design.mul_vec(beta);
    let r2: Vec<f64> = z
        .iter()
        .zip(y_ind)
        .map(|(&zi, &yi)| {
            let r = yi - logistic(zi);
            r * r
        })
        .collect();
    loadings_from_residuals(design, &r2, unpenalized)
}

/// Weighted-lasso logit with `K` rounds of loading updates; the returned
/// fit is the solution under the final loadings.
pub fn fit_logit_lasso(
    design: &ColMatrix,
    y_ind: &[f64],
    lambda: f64,
    opts: &LassoLogitOptions,
) -> Result<LogitLassoFit> {
    if design.nrows() != y_ind.len() {
        return Err(UqpeError::Dimension {
            expected: design.nrows(),
            got: y_ind.len(),
        });
    }
    check_indicator(y_ind)?;
    let mut loadings = initial_loadings(design, y_ind, &opts.unpenalized);
    let mut warm: Option<Vec<f64>> = None;
    let mut sweeps = 0;
    let mut converged = true;
    for _ in 0..opts.loading_iterations {
        let out = solve_l1_logistic(design, y_ind, lambda, &loadings, warm.as_deref(), opts.solver);
        sweeps += out.sweeps;
        converged &= out.converged;
        loadings = updated_loadings(design, y_ind, &out.beta, &opts.unpenalized);
        warm = Some(out.beta);
    }
    let out = solve_l1_logistic(design, y_ind, lambda, &loadings, warm.as_deref(), opts.solver);
    sweeps += out.sweeps;
    converged &= out.converged;
    if !loadings.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(UqpeError::NonFinite("penalty loadings"));
    }
    let support = nonzero(&out.beta);
    Ok(LogitLassoFit {
        q: f64::NAN,
        beta: out.beta,
        lambda,
        loadings,
        lasso_support: support.clone(),
        support,
        post_lasso: false,
        iterations_used: sweeps,
        converged,
        ridge_fallback: false,
    })
}

const RIDGE_FALLBACK: f64 = 1e-6;

/// Unpenalized logistic MLE restricted to the lasso support plus `s1`.
pub fn post_lasso_refit(fit: &LogitLassoFit, design: &ColMatrix, y_ind: &[f64], s1: &[usize]) -> Result<LogitLassoFit> {
    let mut cols: Vec<usize> = fit.lasso_support.iter().chain(s1).copied().collect();
    cols.sort_unstable();
    cols.dedup();
    if let Some(&bad) = cols.iter().find(|&&j| j >= design.ncols()) {
        return Err(UqpeError::Dimension {
            expected: design.ncols(),
            got: bad,
        });
    }
    let sub = design.select_columns(&cols);
    let mut mle = logistic_mle(&sub, y_ind, 0.0, 100);
    let diverged = !mle.converged || mle.max_abs_eta > 30.0 || mle.beta.iter().any(|b| !b.is_finite());
    let mut ridge_fallback = false;
    if diverged {
        log::debug!("post-lasso refit at q={} diverged; using ridge fallback", fit.q);
        mle = logistic_mle(&sub, y_ind, RIDGE_FALLBACK, 200);
        ridge_fallback = true;
    }
    let mut beta = vec![0.0; design.ncols()];
    for (&j, &b) in cols.iter().zip(&mle.beta) {
        beta[j] = b;
    }
    Ok(LogitLassoFit {
        support: nonzero(&beta),
        beta,
        post_lasso: true,
        ridge_fallback,
        converged: fit.converged && mle.converged,
        ..fit.clone()
    })
}

/// How each grid point's `m0` model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// Weighted-lasso logit followed by the post-lasso refit.
    PostLasso,
    /// Classical unpenalized logit over the whole dictionary (capped IRLS).
    Unpenalized,
}

#[derive(Debug, Clone)]
pub struct GridOptions {
    pub lasso: LassoLogitOptions,
    /// Forced-inclusion set for the refit.
    pub forced: Vec<usize>,
    pub model: OutcomeModel,
    /// Iteration cap for the unpenalized model.
    pub irls_max_iter: usize,
}

impl GridOptions {
    pub fn post_lasso(basis: &BasisExpansion, loading_iterations: usize) -> Self {
        Self {
            lasso: LassoLogitOptions {
                loading_iterations,
                unpenalized: basis.intercept_index().into_iter().collect(),
                ..Default::default()
            },
            forced: basis.treatment_terms(),
            model: OutcomeModel::PostLasso,
            irls_max_iter: 25,
        }
    }

    pub fn unpenalized() -> Self {
        Self {
            lasso: LassoLogitOptions::default(),
            forced: Vec::new(),
            model: OutcomeModel::Unpenalized,
            irls_max_iter: 25,
        }
    }
}

/// Fits over a strictly increasing grid of thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QGridFits {
    pub q_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub fits: Vec<LogitLassoFit>,
    /// Grid taus dropped because the indicator was (nearly) degenerate or
    /// duplicated an earlier threshold.
    pub dropped_taus: Vec<f64>,
}

/// Builds the threshold grid from outcome quantiles, dropping thresholds
/// with fewer than [`MIN_SIDE_COUNT`] observations on either side.
pub fn threshold_grid(y: &[f64], tau_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if tau_grid.is_empty() {
        return Err(UqpeError::InvalidConfig("empty tau grid".into()));
    }
    for w in tau_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(UqpeError::InvalidConfig("tau grid must be strictly increasing".into()));
        }
    }
    if tau_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(UqpeError::InvalidConfig("tau grid must lie in (0, 1)".into()));
    }
    let ys = sorted(y);
    let n = ys.len();
    let (mut qs, mut taus, mut dropped) = (Vec::new(), Vec::new(), Vec::new());
    for &t in tau_grid {
        let q = ys[order_statistic_rank(n, t) - 1];
        let below = ys.partition_point(|&v| v <= q);
        let degenerate = below < MIN_SIDE_COUNT || n - below < MIN_SIDE_COUNT;
        if degenerate || qs.last().is_some_and(|&last| q <= last) {
            log::warn!("dropping grid point tau={t} (q={q}): degenerate or duplicate threshold");
            dropped.push(t);
            continue;
        }
        qs.push(q);
        taus.push(t);
    }
    if qs.is_empty() {
        return Err(UqpeError::AllGridDegenerate);
    }
    Ok((qs, taus, dropped))
}

pub fn indicator(y: &[f64], q: f64) -> Vec<f64> {
    y.iter().map(|&v| if v <= q { 1.0 } else { 0.0 }).collect()
}

fn fit_one(design: &ColMatrix, y: &[f64], q: f64, lambda: f64, opts: &GridOptions) -> Result<LogitLassoFit> {
    let y_ind = indicator(y, q);
    match opts.model {
        OutcomeModel::PostLasso => {
            let mut lasso = fit_logit_lasso(design, &y_ind, lambda, &opts.lasso)?;
            lasso.q = q;
            post_lasso_refit(&lasso, design, &y_ind, &opts.forced)
        }
        OutcomeModel::Unpenalized => {
            check_indicator(&y_ind)?;
            let glm = glm_irls(design, &y_ind, opts.irls_max_iter);
            if glm.beta.iter().any(|b| !b.is_finite()) {
                return Err(UqpeError::BaselineInfeasible(format!(
                    "logit fit at q={q} is not finite"
                )));
            }
            let support = nonzero(&glm.beta);
            Ok(LogitLassoFit {
                q,
                beta: glm.beta,
                lambda: 0.0,
                loadings: vec![0.0; design.ncols()],
                lasso_support: support.clone(),
                support,
                post_lasso: false,
                iterations_used: glm.iterations,
                converged: glm.converged,
                ridge_fallback: false,
            })
        }
    }
}

/// Fits one model per grid threshold on an already evaluated design.
pub fn fit_q_grid_design(design: &ColMatrix, y: &[f64], tau_grid: &[f64], opts: &GridOptions) -> Result<QGridFits> {
    let (q_grid, taus, dropped_taus) = threshold_grid(y, tau_grid)?;
    if opts.model == OutcomeModel::Unpenalized && design.ncols() >= design.nrows() {
        return Err(UqpeError::BaselineInfeasible(format!(
            "{} regressors for {} observations",
            design.ncols(),
            design.nrows()
        )));
    }
    let lambda = lambda_logit(design.nrows().max(3), design.ncols())?;
    let fits = q_grid
        .par_iter()
        .map(|&q| fit_one(design, y, q, lambda, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(QGridFits {
        q_grid,
        tau_grid: taus,
        fits,
        dropped_taus,
    })
}

/// Evaluates the basis on the dataset and fits the post-lasso grid with
/// `K` loading iterations and forced set `s1`.
pub fn fit_q_grid(
    dataset: &Dataset,
    basis: &BasisExpansion,
    tau_grid: &[f64],
    loading_iterations: usize,
    s1: &[usize],
) -> Result<QGridFits> {
    let design = basis.design(dataset.covariates())?;
    let mut opts = GridOptions::post_lasso(basis, loading_iterations);
    opts.forced = s1.to_vec();
    fit_q_grid_design(&design, dataset.outcome(), tau_grid, &opts)
}

impl QGridFits {
    /// Grid index whose threshold is nearest to `q` (ties go to the lower
    /// point). Thresholds beyond the grid by more than `tol` are rejected.
    pub fn nearest_index(&self, q: f64, tol: f64) -> Result<usize> {
        let lo = self.q_grid[0];
        let hi = *self.q_grid.last().unwrap();
        if !(q >= lo - tol && q <= hi + tol) {
            return Err(UqpeError::Extrapolation { q, lo, hi });
        }
        let k = self.q_grid.partition_point(|&g| g < q);
        if k == 0 {
            return Ok(0);
        }
        if k == self.q_grid.len() {
            return Ok(k - 1);
        }
        let (below, above) = (self.q_grid[k - 1], self.q_grid[k]);
        Ok(if q - below <= above - q { k - 1 } else { k })
    }

    /// Default extrapolation tolerance: a tenth of the grid's span.
    pub fn default_tolerance(&self) -> f64 {
        0.1 * (self.q_grid.last().unwrap() - self.q_grid[0]).max(0.0)
    }

    pub fn len(&self) -> usize {
        self.q_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_grid.is_empty()
    }

    /// Every fit converged.
    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }
}

/// `m0(x, q) = L(b(x)' beta_q)` using the nearest grid fit.
pub fn predict_m0(fits: &QGridFits, basis: &BasisExpansion, x: &[f64], q: f64) -> Result<f64> {
    let g = fits.nearest_index(q, fits.default_tolerance())?;
    let b = basis.evaluate(x)?;
    Ok(logistic(dot(&b, &fits.fits[g].beta)))
}

/// `m1(x, q) = L'(z) (d b(x) / d x1)' beta_q` with `z = b(x)' beta_q`.
pub fn predict_m1(fits: &QGridFits, basis: &BasisExpansion, x: &[f64], q: f64) -> Result<f64> {
    let g = fits.nearest_index(q, fits.default_tolerance())?;
    let beta = &fits.fits[g].beta;
    let b = basis.evaluate(x)?;
    let db = basis.evaluate_derivative(x, basis.treatment_index())?;
    let p = logistic(dot(&b, beta));
    Ok(p * (1.0 - p) * dot(&db, beta))
}

/// `m0` and `m1` at every observation for every grid threshold.
#[derive(Debug, Clone)]
pub struct GridPredictions {
    /// `m0[g][i]`
    pub m0: Vec<Vec<f64>>,
    /// `m1[g][i]`
    pub m1: Vec<Vec<f64>>,
}

impl GridPredictions {
    pub fn new(fits: &QGridFits, design: &ColMatrix, derivative: &DerivativeDesign) -> Self {
        let (m0, m1) = fits
            .fits
            .par_iter()
            .map(|f| {
                let z = design.mul_vec(&f.beta);
                let dz = derivative.mul_vec(&f.beta);
                let m0: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
                let m1: Vec<f64> = m0.iter().zip(&dz).map(|(&p, &d)| p * (1.0 - p) * d).collect();
                (m0, m1)
            })
            .unzip();
        Self { m0, m1 }
    }

    /// Share of `(x, g)` pairs with `m0(x, q_g) > m0(x, q_{g+1})`.
    pub fn crossing_rate(&self) -> f64 {
        let g = self.m0.len();
        if g < 2 {
            return 0.0;
        }
        let n = self.m0[0].len();
        let mut bad = 0usize;
        for k in 0..g - 1 {
            bad += (0..n).filter(|&i| self.m0[k][i] > self.m0[k + 1][i]).count();
        }
        bad as f64 / ((g - 1) * n) as f64
    }
}
