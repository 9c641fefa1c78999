//! Self-contained checks shared by the focused integration tests and the
//! acceptance runner. Each returns a summary or a description of the first
//! failure.

use super::*;
use uqpe::density::{bootstrap_quantile, bootstrap_rank, empirical_quantile};
use uqpe::lasso_logit::{fit_logit_lasso, GridPredictions, LassoLogitOptions, LogitLassoFit, QGridFits};
use uqpe::logistic::{kkt_violation, l1_logistic_objective, logistic_mle, solve_l1_logistic, SolverOptions};
use uqpe::normal::{phi_cdf, phi_pdf};
use uqpe::riesz::{fit_riesz, riesz_kkt_violation, riesz_objective, RieszMoments};
use uqpe::score::ScoreView;
use uqpe::simulation::{linear_truth, simulate_dataset, Dgp, DgpSpec, Sparsity};

pub type Check<T> = std::result::Result<T, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

/// Weighted lasso-logit on 50 instances; returns the largest objective gap.
pub fn lasso_logit_oracle() -> Check<f64> {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let n = 60 + (seed as usize * 37) % 141;
        let p = 3 + (seed as usize * 7) % 18;
        let (rows, y) = logistic_instance(seed, n, p);
        let design = to_matrix(&rows);
        let mut w: Vec<f64> = (0..p)
            .map(|j| 0.5 + ((j * 13 + seed as usize) % 7) as f64 / 7.0)
            .collect();
        w[0] = 0.0;
        let lambda = 0.3 * (n as f64).sqrt() * (1.0 + (seed % 3) as f64);
        let fit = solve_l1_logistic(&design, &y, lambda, &w, None, SolverOptions::default());
        ensure!(fit.converged, "seed {seed}: solver did not converge");
        let reference = reference_l1_logistic(&rows, &y, lambda, &w);
        let ours = logistic_objective(&rows, &y, &fit.beta, lambda, &w);
        let theirs = logistic_objective(&rows, &y, &reference, lambda, &w);
        worst = worst.max((ours - theirs).abs());
        ensure!(
            (ours - theirs).abs() <= 1e-8,
            "seed {seed}: {ours} vs reference {theirs}"
        );
        ensure!(
            (l1_logistic_objective(&design, &y, &fit.beta, lambda, &w) - ours).abs() < 1e-12,
            "seed {seed}: objective mismatch"
        );
        let kkt = kkt_violation(&design, &y, &fit.beta, lambda, &w);
        ensure!(kkt <= 1e-6, "seed {seed}: KKT violation {kkt}");
    }
    Ok(worst)
}

/// Unpenalized fits against Newton on 50 instances.
pub fn logit_newton_oracle() -> Check<f64> {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let (rows, y) = logistic_instance(1000 + seed, 200, 2 + (seed as usize % 5));
        let design = to_matrix(&rows);
        let p = rows[0].len();
        let reference = newton_logistic(&rows, &y);
        let fit = solve_l1_logistic(&design, &y, 0.0, &vec![1.0; p], None, SolverOptions::default());
        let ours = logistic_objective(&rows, &y, &fit.beta, 0.0, &vec![0.0; p]);
        let theirs = logistic_objective(&rows, &y, &reference, 0.0, &vec![0.0; p]);
        worst = worst.max((ours - theirs).abs());
        ensure!((ours - theirs).abs() <= 1e-8, "seed {seed}: {ours} vs Newton {theirs}");
        for (a, b) in fit.beta.iter().zip(&reference) {
            ensure!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
        let mle = logistic_mle(&design, &y, 0.0, 100);
        ensure!(mle.converged, "seed {seed}: IRLS did not converge");
        for (a, b) in mle.beta.iter().zip(&reference) {
            ensure!((a - b).abs() < 1e-8, "seed {seed}: IRLS {a} vs Newton {b}");
        }
    }
    Ok(worst)
}

/// Full loading iterations end at a KKT point of the final penalty.
pub fn loading_iteration_kkt() -> Check<()> {
    for seed in 0..10u64 {
        let (rows, y) = logistic_instance(2000 + seed, 150, 12);
        let design = to_matrix(&rows);
        let lambda = 1.1 * 2.5 * (150f64).sqrt();
        let fit = fit_logit_lasso(&design, &y, lambda, &LassoLogitOptions::default()).map_err(|e| e.to_string())?;
        ensure!(fit.loadings[0] == 0.0, "seed {seed}: intercept loading is penalized");
        ensure!(
            fit.loadings.iter().all(|v| v.is_finite() && *v >= 0.0),
            "seed {seed}: bad loadings"
        );
        let kkt = kkt_violation(&design, &y, &fit.beta, lambda, &fit.loadings);
        ensure!(kkt <= 1e-6, "seed {seed}: KKT violation {kkt}");
    }
    Ok(())
}

/// Riesz quadratic program on 50 instances; returns the largest objective gap.
pub fn riesz_oracle() -> Check<f64> {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let p = 2 + (seed as usize * 5) % 19;
        let n = 30 + (seed as usize * 31) % 171;
        let (g, m) = riesz_instance(seed, n, p);
        let lambda = [0.0, 0.01, 0.1, 0.4][seed as usize % 4];
        let moments = RieszMoments {
            gram: g.clone(),
            m: m.clone(),
        };
        let fit = fit_riesz(&moments, lambda);
        ensure!(fit.converged, "seed {seed}: solver did not converge");
        let reference = reference_riesz(&g, &m, lambda);
        let ours = riesz_objective_ref(&g, &m, &fit.rho, lambda);
        let theirs = riesz_objective_ref(&g, &m, &reference, lambda);
        ensure!(
            (riesz_objective(&moments, &fit.rho, lambda) - ours).abs() < 1e-10,
            "seed {seed}: objective mismatch"
        );
        worst = worst.max((ours - theirs).abs());
        ensure!(
            (ours - theirs).abs() <= 1e-8,
            "seed {seed}: {ours} vs reference {theirs}"
        );
        let kkt = riesz_kkt_violation(&moments, &fit.rho, lambda);
        ensure!(kkt <= 1e-6, "seed {seed}: KKT violation {kkt}");
        if lambda == 0.0 && n > p {
            let rows: Vec<Vec<f64>> = (0..p).map(|a| g[a * p..(a + 1) * p].to_vec()).collect();
            let exact = solve(rows, m.clone());
            for (a, b) in fit.rho.iter().zip(&exact) {
                ensure!((a - b).abs() < 1e-6, "seed {seed}: {a} vs exact {b}");
            }
        }
    }
    Ok(worst)
}

fn check_loss(y: &[f64], tau: f64, q: f64) -> f64 {
    y.iter()
        .map(|&v| {
            let u = v - q;
            u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

/// Lowest order statistic minimizing `sum rho_tau(Y_i - q) - q S`.
pub fn brute_force_quantile(y: &[f64], tau: f64, q_hat: f64, eta: &[f64]) -> f64 {
    let s: f64 = y
        .iter()
        .zip(eta)
        .map(|(&v, &e)| e * (tau - if v <= q_hat { 1.0 } else { 0.0 }))
        .sum();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let values: Vec<f64> = sorted.iter().map(|&q| check_loss(y, tau, q) - q * s).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let k = values.iter().position(|&v| v - best <= 1e-10 * scale).unwrap();
    sorted[k]
}

/// 1000 random instances; returns how many ranks were clamped.
pub fn bootstrap_quantile_suite() -> Check<usize> {
    let mut r = rng(20_240_601);
    let mut clamped = 0;
    for case in 0..1000 {
        let n = r.random_range(1..=50);
        let tau = r.random_range(0.02..0.98);
        let y: Vec<f64> = (0..n).map(|_| 3.0 * gauss(&mut r) + 1.0).collect();
        let scale = [0.0, 0.3, 1.0, 3.0][case % 4];
        let eta: Vec<f64> = (0..n).map(|_| scale * gauss(&mut r)).collect();
        let q_hat = empirical_quantile(&y, tau).map_err(|e| e.to_string())?;
        let ours = bootstrap_quantile(&y, tau, q_hat, &eta).map_err(|e| e.to_string())?;
        clamped += bootstrap_rank(&y, tau, q_hat, &eta).1 as usize;
        let reference = brute_force_quantile(&y, tau, q_hat, &eta);
        ensure!(ours == reference, "case {case}: n={n} tau={tau}: {ours} vs {reference}");
        if scale == 0.0 {
            ensure!(ours == q_hat, "case {case}: zero multipliers moved the quantile");
        }
    }
    Ok(clamped)
}

pub struct RobustnessRow {
    pub tau: f64,
    pub theta: f64,
    /// (estimate, standard error) with m wrong, omega wrong, both wrong.
    pub wrong_m: (f64, f64),
    pub wrong_omega: (f64, f64),
    pub both_wrong: (f64, f64),
}

impl RobustnessRow {
    pub fn z(&self, (mean, se): (f64, f64)) -> f64 {
        (mean - self.theta) / se
    }
}

fn single_point_grid(q: f64) -> QGridFits {
    QGridFits {
        q_grid: vec![q],
        tau_grid: vec![0.5],
        fits: vec![LogitLassoFit {
            q,
            beta: vec![0.0],
            lambda: 0.0,
            loadings: vec![0.0],
            support: vec![],
            lasso_support: vec![],
            post_lasso: false,
            iterations_used: 0,
            converged: true,
            ridge_fallback: false,
        }],
        dropped_taus: vec![],
    }
}

fn score_mean(y: &[f64], q: f64, m0: Vec<f64>, m1: Vec<f64>, omega: &[f64]) -> (f64, f64) {
    let n = y.len();
    let fits = single_point_grid(q);
    let scores: Vec<f64> = (0..n)
        .map(|i| m1[i] - omega[i] * ((y[i] <= q) as u8 as f64 - m0[i]))
        .collect();
    let preds = GridPredictions {
        m0: vec![m0],
        m1: vec![m1],
    };
    let view = ScoreView {
        fits: &fits,
        preds: &preds,
        omega: Some(omega),
    };
    let mean = view.theta(y, q, None).unwrap();
    let direct = scores.iter().sum::<f64>() / n as f64;
    assert!((direct - mean).abs() < 1e-12);
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Linear Gaussian design with p = 3, where `m0(x, q) = Phi(q - mu(x))`,
/// `m1 = -phi(q - mu(x))`, `omega(x) = -(x1 - gamma' x_-1)` and
/// `theta(tau) = -f_Y(q_tau)`. Each nuisance is replaced in turn by a
/// deliberately wrong function.
pub fn double_robustness(n: usize) -> Vec<RobustnessRow> {
    let spec = DgpSpec {
        dgp: Dgp::Linear,
        sparsity: Sparsity::I,
        n,
        p: 3,
        seed: 11,
    };
    let data = simulate_dataset(&spec, 5).unwrap();
    let y = data.outcome();
    let x = data.covariates();
    let coef = spec.coefficients();
    let index: Vec<f64> = (0..n).map(|i| coef[0] * x.get(i, 1) + coef[1] * x.get(i, 2)).collect();
    let mu: Vec<f64> = (0..n).map(|i| x.get(i, 0) + index[i]).collect();
    let omega_true: Vec<f64> = (0..n).map(|i| -(x.get(i, 0) - index[i])).collect();
    let omega_wrong: Vec<f64> = (0..n).map(|i| -0.5 * x.get(i, 0) + 0.3).collect();

    [0.25, 0.5, 0.75]
        .into_iter()
        .map(|tau| {
            let (q, _, theta) = linear_truth(Sparsity::I, 3, tau);
            let m0_true: Vec<f64> = mu.iter().map(|m| phi_cdf(q - m)).collect();
            let m1_true: Vec<f64> = mu.iter().map(|m| -phi_pdf(q - m)).collect();
            let tilt = |i: usize| (q - 0.7 * x.get(i, 0) - 0.2) / 1.3;
            let m0_wrong: Vec<f64> = (0..n).map(|i| phi_cdf(tilt(i))).collect();
            let m1_wrong: Vec<f64> = (0..n).map(|i| -0.7 / 1.3 * phi_pdf(tilt(i))).collect();
            RobustnessRow {
                tau,
                theta,
                wrong_m: score_mean(y, q, m0_wrong.clone(), m1_wrong.clone(), &omega_true),
                wrong_omega: score_mean(y, q, m0_true, m1_true, &omega_wrong),
                both_wrong: score_mean(y, q, m0_wrong, m1_wrong, &omega_wrong),
            }
        })
        .collect()
}
