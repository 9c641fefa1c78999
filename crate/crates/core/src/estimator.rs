//! End-to-end estimation: nuisance fits, point estimates, bootstrap
//! inference and the baselines.

use crate::basis::BasisExpansion;
use crate::bootstrap::{
    build_bands, pointwise_critical_values, run_bootstrap, se_iqr, test_zero_uqpe, uniform_critical_value, Band,
    BootstrapDraws, Interval, Verdict,
};
use crate::data::Dataset;
use crate::density::{empirical_quantile, kde, KernelSpec};
use crate::error::{Result, Stage, StageExt, UqpeError};
use crate::lasso_logit::{
    fit_q_grid_design, indicator, predict_m0, predict_m1, GridOptions, GridPredictions, OutcomeModel, QGridFits,
};
use crate::logistic::glm_irls;
use crate::matrix::dot;
use crate::normal::logistic;
use crate::riesz::{compute_moments_sparse, fit_riesz, lambda_riesz, predict_omega, predict_omega_design, RieszFit};
use crate::score::{SampleContext, ScoreView};
use serde::{Deserialize, Serialize};

/// Version of the serialized [`UqpeEstimate`] layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Post-lasso logit plus the Riesz correction.
    Debiased,
    /// Post-lasso logit, average of `m1` only.
    PluginOnly,
    /// Unpenalized logit over the dictionary, average of `m1` only.
    RifLogit,
}

impl Estimator {
    pub fn debias(self) -> bool {
        self == Estimator::Debiased
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Debiased => "debiased",
            Estimator::PluginOnly => "plugin-only",
            Estimator::RifLogit => "rif-logit",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('_', "-").as_str() {
            "debiased" => Ok(Estimator::Debiased),
            "plugin-only" => Ok(Estimator::PluginOnly),
            "rif-logit" => Ok(Estimator::RifLogit),
            other => Err(format!(
                "unknown estimator `{other}` (debiased, plugin-only, rif-logit)"
            )),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Equispaced points `lo, lo + step, ..., hi` (rounded to 1e-12).
pub fn tau_range(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| {
            let t = lo + (hi - lo) * k as f64 / (count - 1) as f64;
            (t * 1e12).round() / 1e12
        })
        .collect()
}

/// Default threshold grid: 41 points on `[0.15, 0.85]`.
pub fn default_grid_taus() -> Vec<f64> {
    tau_range(0.15, 0.85, 41)
}

/// Default evaluation set: `0.20, 0.25, ..., 0.80`.
pub fn default_tau_set() -> Vec<f64> {
    tau_range(0.2, 0.8, 13)
}

/// Sorted union, merging values closer than 1e-9.
pub fn merge_taus(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    all
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqpeConfig {
    /// Evaluation points; the uniform band is taken over these.
    pub tau_set: Vec<f64>,
    pub upsilon: (f64, f64),
    /// Threshold grid for the outcome models (merged with `tau_set`).
    pub grid_taus: Vec<f64>,
    pub alpha: f64,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub loading_iterations: usize,
    pub estimator: Estimator,
    /// Polynomial degree of both dictionaries.
    pub degree: u32,
    /// Polynomial degree of the RIF-Logit dictionary.
    pub rif_degree: u32,
}

impl Default for UqpeConfig {
    fn default() -> Self {
        Self {
            tau_set: default_tau_set(),
            upsilon: (0.2, 0.8),
            grid_taus: default_grid_taus(),
            alpha: 0.05,
            bootstrap_reps: 1000,
            seed: 0,
            loading_iterations: 2,
            estimator: Estimator::Debiased,
            degree: 3,
            rif_degree: 3,
        }
    }
}

impl UqpeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UqpeError::InvalidConfig(m));
        let (lo, hi) = self.upsilon;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return bad(format!("upsilon [{lo}, {hi}] must be a closed interval inside (0, 1)"));
        }
        if self.tau_set.is_empty() {
            return bad("tau_set is empty".into());
        }
        if self.tau_set.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("tau_set must be strictly increasing".into());
        }
        if let Some(t) = self.tau_set.iter().find(|&&t| !(t >= lo - 1e-12 && t <= hi + 1e-12)) {
            return bad(format!("tau {t} lies outside upsilon [{lo}, {hi}]"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if self.bootstrap_reps < 2 {
            return bad(format!("bootstrap_reps {} must be at least 2", self.bootstrap_reps));
        }
        if self.grid_taus.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return bad("grid taus must lie in (0, 1)".into());
        }
        if self.degree == 0 || self.rif_degree == 0 {
            return bad("dictionary degree must be positive".into());
        }
        Ok(())
    }

    /// Threshold grid actually fitted: `grid_taus` merged with `tau_set`, so
    /// point estimates sit on grid points.
    pub fn effective_grid(&self) -> Vec<f64> {
        merge_taus(&self.grid_taus, &self.tau_set)
    }
}

/// `-theta / f`, rejecting densities at or below `f_floor`.
pub fn estimate_uqpe(theta_hat: f64, f_hat: f64, f_floor: f64) -> Result<f64> {
    if !(f_hat > f_floor) {
        return Err(UqpeError::DensityFloor {
            f: f_hat,
            floor: f_floor,
        });
    }
    Ok(-theta_hat / f_hat)
}

/// Sample average of the doubly robust score at threshold `q`, evaluated
/// row by row from the fitted models.
pub fn estimate_theta(
    dataset: &Dataset,
    qfits: &QGridFits,
    riesz: &RieszFit,
    basis_b: &BasisExpansion,
    basis_h: &BasisExpansion,
    q: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (i, &yi) in dataset.outcome().iter().enumerate() {
        let x = dataset.row(i);
        let m0 = predict_m0(qfits, basis_b, &x, q)?;
        let m1 = predict_m1(qfits, basis_b, &x, q)?;
        let omega = predict_omega(riesz, basis_h, &x)?;
        let ind = if yi <= q { 1.0 } else { 0.0 };
        sum += m1 - omega * (ind - m0);
    }
    Ok(sum / dataset.n() as f64)
}

/// Average of `m1(X_i, q)` without the correction term.
pub fn estimate_theta_plugin_only(
    dataset: &Dataset,
    qfits: &QGridFits,
    basis_b: &BasisExpansion,
    q: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for i in 0..dataset.n() {
        sum += predict_m1(qfits, basis_b, &dataset.row(i), q)?;
    }
    Ok(sum / dataset.n() as f64)
}

/// Single-threshold RIF-Logit estimate: unpenalized logit of `1{Y <= q_tau}`
/// on the raw covariates plus an intercept, `theta = mean m1`,
/// `UQPE = -theta / f`.
pub fn rif_logit_baseline(dataset: &Dataset, tau: f64, h1: f64) -> Result<f64> {
    let (n, p) = (dataset.n(), dataset.p());
    if p + 1 >= n {
        return Err(UqpeError::BaselineInfeasible(format!(
            "{} regressors for {n} observations",
            p + 1
        )));
    }
    let y = dataset.outcome();
    let q = empirical_quantile(y, tau)?;
    let mut columns = vec![vec![1.0; n]];
    columns.extend((0..p).map(|j| dataset.covariates().col(j).to_vec()));
    let design = crate::matrix::ColMatrix::from_columns(&columns);
    let y_ind = indicator(y, q);
    let ones = y_ind.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(UqpeError::DegenerateOutcome { ones, n });
    }
    let fit = glm_irls(&design, &y_ind, 25);
    if fit.beta.iter().any(|b| !b.is_finite()) {
        return Err(UqpeError::BaselineInfeasible("logit fit is not finite".into()));
    }
    let slope = fit.beta[1 + dataset.treatment_index()];
    let mut theta = 0.0;
    for i in 0..n {
        let row: Vec<f64> = (0..design.ncols()).map(|j| design.get(i, j)).collect();
        let m = logistic(dot(&row, &fit.beta));
        theta += m * (1.0 - m) * slope;
    }
    theta /= n as f64;
    let f = kde(y, q, h1, KernelSpec::Epanechnikov);
    estimate_uqpe(theta, f, crate::score::density_floor(y))
}

/// Fitted outcome models on the threshold grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub model: OutcomeModel,
    pub basis: BasisExpansion,
    pub fits: QGridFits,
    #[serde(skip)]
    pub predictions: Option<GridPredictions>,
}

/// Fitted Riesz representer with its in-sample predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RieszStage {
    pub basis: BasisExpansion,
    pub fit: RieszFit,
    #[serde(skip)]
    pub omega: Vec<f64>,
}

/// Everything fitted before the bootstrap; serializable for persistence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FittedModels {
    pub schema_version: u32,
    pub post_lasso: Option<OutcomeFit>,
    pub rif_logit: Option<OutcomeFit>,
    pub riesz: Option<RieszStage>,
}

fn fit_outcome(dataset: &Dataset, config: &UqpeConfig, model: OutcomeModel) -> Result<OutcomeFit> {
    let degree = match model {
        OutcomeModel::PostLasso => config.degree,
        OutcomeModel::Unpenalized => config.rif_degree,
    };
    let basis = BasisExpansion::build(dataset, degree).stage(Stage::Basis)?;
    let design = basis.design(dataset.covariates()).stage(Stage::Basis)?;
    let derivative = basis.derivative_design(dataset.covariates()).stage(Stage::Basis)?;
    let opts = match model {
        OutcomeModel::PostLasso => GridOptions::post_lasso(&basis, config.loading_iterations),
        OutcomeModel::Unpenalized => GridOptions::unpenalized(),
    };
    let fits =
        fit_q_grid_design(&design, dataset.outcome(), &config.effective_grid(), &opts).stage(Stage::OutcomeModel)?;
    let predictions = GridPredictions::new(&fits, &design, &derivative);
    Ok(OutcomeFit {
        model,
        basis,
        fits,
        predictions: Some(predictions),
    })
}

fn fit_riesz_stage(dataset: &Dataset, config: &UqpeConfig) -> Result<RieszStage> {
    let basis = BasisExpansion::build(dataset, config.degree).stage(Stage::Basis)?;
    let h = basis.design(dataset.covariates()).stage(Stage::Basis)?;
    let dh = basis.derivative_design(dataset.covariates()).stage(Stage::Basis)?;
    let moments = compute_moments_sparse(&h, &dh).stage(Stage::Riesz)?;
    let lambda = lambda_riesz(dataset.n(), basis.dimension()).stage(Stage::Riesz)?;
    let fit = fit_riesz(&moments, lambda);
    if !fit.converged {
        log::warn!(
            "Riesz coordinate descent stopped after {} sweeps without converging",
            fit.sweeps
        );
    }
    let omega = predict_omega_design(&fit, &h);
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(UqpeError::NonFinite("Riesz predictions").at(Stage::Riesz));
    }
    Ok(RieszStage { basis, fit, omega })
}

impl FittedModels {
    /// Fits whatever the requested estimators need.
    pub fn fit(dataset: &Dataset, config: &UqpeConfig, estimators: &[Estimator]) -> Result<Self> {
        config.validate()?;
        let needs_lasso = estimators.iter().any(|e| *e != Estimator::RifLogit);
        let needs_rif = estimators.contains(&Estimator::RifLogit);
        let needs_riesz = estimators.contains(&Estimator::Debiased);
        let riesz = needs_riesz.then(|| fit_riesz_stage(dataset, config)).transpose()?;
        let post_lasso = needs_lasso
            .then(|| fit_outcome(dataset, config, OutcomeModel::PostLasso))
            .transpose()?;
        let rif_logit = needs_rif
            .then(|| fit_outcome(dataset, config, OutcomeModel::Unpenalized))
            .transpose()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            post_lasso,
            rif_logit,
            riesz,
        })
    }

    /// Point estimate of `theta(q)` for `estimator` on the fitted sample.
    pub fn point_theta(&self, estimator: Estimator, y: &[f64], q: f64) -> Result<f64> {
        self.view(estimator)?.theta(y, q, None)
    }

    pub fn view(&self, estimator: Estimator) -> Result<ScoreView<'_>> {
        let missing = || UqpeError::InvalidConfig(format!("models for `{estimator}` were not fitted"));
        let outcome = match estimator {
            Estimator::RifLogit => self.rif_logit.as_ref(),
            _ => self.post_lasso.as_ref(),
        }
        .ok_or_else(missing)?;
        let omega = match estimator {
            Estimator::Debiased => Some(self.riesz.as_ref().ok_or_else(missing)?.omega.as_slice()),
            _ => None,
        };
        Ok(ScoreView {
            fits: &outcome.fits,
            preds: outcome.predictions.as_ref().ok_or_else(missing)?,
            omega,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub tau: f64,
    pub q_tau: f64,
    pub theta_hat: f64,
    pub f_hat: f64,
    pub uqpe_hat: f64,
    pub se_theta: f64,
    pub se_uqpe: f64,
    pub c_pointwise_theta: f64,
    pub c_pointwise_uqpe: f64,
    pub theta_band: Band,
    pub uqpe_band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub bandwidth: f64,
    pub f_floor: f64,
    pub p_b: usize,
    pub lambda_logit: f64,
    pub grid_size: usize,
    pub dropped_grid_taus: Vec<f64>,
    pub nonconverged_fits: usize,
    pub ridge_fallbacks: usize,
    pub mean_support: f64,
    pub crossing_rate: f64,
    pub p_h: Option<usize>,
    pub lambda_riesz: Option<f64>,
    pub riesz_support: Option<usize>,
    pub riesz_converged: Option<bool>,
    pub bootstrap_reps: usize,
    pub clamp_count: usize,
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqpeEstimate {
    pub schema_version: u32,
    pub estimator: Estimator,
    pub debiased: bool,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub upsilon: (f64, f64),
    pub seed: u64,
    pub rows: Vec<TauEstimate>,
    pub c_uniform_theta: f64,
    pub c_uniform_uqpe: f64,
    pub zero_test: Verdict,
    pub diagnostics: Diagnostics,
}

impl UqpeEstimate {
    pub fn row(&self, tau: f64) -> Option<&TauEstimate> {
        self.rows.iter().find(|r| (r.tau - tau).abs() < 1e-9)
    }

    /// The uniform UQPE band contains `truth(tau)` at every evaluation point.
    pub fn uniform_covers(&self, truth: impl Fn(f64) -> f64) -> bool {
        self.rows.iter().all(|r| r.uqpe_band.uniform.contains(truth(r.tau)))
    }
}

fn diagnostics(
    ctx: &SampleContext,
    models: &FittedModels,
    estimator: Estimator,
    draws: &BootstrapDraws,
) -> Diagnostics {
    let outcome = match estimator {
        Estimator::RifLogit => models.rif_logit.as_ref(),
        _ => models.post_lasso.as_ref(),
    }
    .expect("outcome models fitted");
    let fits = &outcome.fits.fits;
    let riesz = models.riesz.as_ref().filter(|_| estimator.debias());
    Diagnostics {
        bandwidth: ctx.h1,
        f_floor: ctx.f_floor,
        p_b: outcome.basis.dimension(),
        lambda_logit: fits.first().map_or(0.0, |f| f.lambda),
        grid_size: fits.len(),
        dropped_grid_taus: outcome.fits.dropped_taus.clone(),
        nonconverged_fits: fits.iter().filter(|f| !f.converged).count(),
        ridge_fallbacks: fits.iter().filter(|f| f.ridge_fallback).count(),
        mean_support: fits.iter().map(|f| f.support.len() as f64).sum::<f64>() / fits.len().max(1) as f64,
        crossing_rate: outcome.predictions.as_ref().map_or(0.0, |p| p.crossing_rate()),
        p_h: riesz.map(|r| r.basis.dimension()),
        lambda_riesz: riesz.map(|r| r.fit.lambda),
        riesz_support: riesz.map(|r| r.fit.support.len()),
        riesz_converged: riesz.map(|r| r.fit.converged),
        bootstrap_reps: draws.reps(),
        clamp_count: draws.clamp_count,
        redraws: draws.redraws,
    }
}

struct PointEstimates {
    theta: Vec<f64>,
    f: Vec<f64>,
    uqpe: Vec<f64>,
}

fn summarize(
    config: &UqpeConfig,
    dataset: &Dataset,
    estimator: Estimator,
    q_hats: &[f64],
    point: &PointEstimates,
    draws: &BootstrapDraws,
    diagnostics: Diagnostics,
) -> Result<UqpeEstimate> {
    let t = config.tau_set.len();
    let se =
        |rows: &[Vec<f64>]| -> Result<Vec<f64>> { (0..t).map(|k| se_iqr(&BootstrapDraws::column(rows, k))).collect() };
    let se_theta = se(&draws.theta_star)?;
    let se_uqpe = se(&draws.uqpe_star)?;
    let c_theta = uniform_critical_value(&draws.theta_star, &point.theta, &se_theta, config.alpha)?;
    let c_uqpe = uniform_critical_value(&draws.uqpe_star, &point.uqpe, &se_uqpe, config.alpha)?;
    let cp_theta = pointwise_critical_values(&draws.theta_star, &point.theta, &se_theta, config.alpha)?;
    let cp_uqpe = pointwise_critical_values(&draws.uqpe_star, &point.uqpe, &se_uqpe, config.alpha)?;
    let theta_bands = build_bands(&point.theta, &se_theta, c_theta, &cp_theta);
    let uqpe_bands = build_bands(&point.uqpe, &se_uqpe, c_uqpe, &cp_uqpe);
    let uniform_theta: Vec<Interval> = theta_bands.iter().map(|b| b.uniform).collect();
    let rows = (0..t)
        .map(|k| TauEstimate {
            tau: config.tau_set[k],
            q_tau: q_hats[k],
            theta_hat: point.theta[k],
            f_hat: point.f[k],
            uqpe_hat: point.uqpe[k],
            se_theta: se_theta[k],
            se_uqpe: se_uqpe[k],
            c_pointwise_theta: cp_theta[k],
            c_pointwise_uqpe: cp_uqpe[k],
            theta_band: theta_bands[k],
            uqpe_band: uqpe_bands[k],
        })
        .collect();
    Ok(UqpeEstimate {
        schema_version: SCHEMA_VERSION,
        estimator,
        debiased: estimator.debias(),
        n: dataset.n(),
        p: dataset.p(),
        alpha: config.alpha,
        upsilon: config.upsilon,
        seed: config.seed,
        rows,
        c_uniform_theta: c_theta,
        c_uniform_uqpe: c_uqpe,
        zero_test: test_zero_uqpe(&uniform_theta),
        diagnostics,
    })
}

/// Result of one variant inside a Monte Carlo replication.
#[derive(Debug, Clone)]
pub enum VariantOutcome {
    Estimated(Box<UqpeEstimate>),
    /// Point estimates exist but every bootstrap draw coincides at some
    /// tau, so no standard error or band can be formed.
    NoInference {
        taus: Vec<f64>,
        uqpe: Vec<f64>,
    },
}

impl VariantOutcome {
    pub fn uqpe(&self) -> Vec<f64> {
        match self {
            Self::Estimated(e) => e.rows.iter().map(|r| r.uqpe_hat).collect(),
            Self::NoInference { uqpe, .. } => uqpe.clone(),
        }
    }

    pub fn estimate(&self) -> Option<&UqpeEstimate> {
        match self {
            Self::Estimated(e) => Some(e),
            Self::NoInference { .. } => None,
        }
    }
}

fn estimate_outcomes(
    dataset: &Dataset,
    config: &UqpeConfig,
    models: &FittedModels,
    estimators: &[Estimator],
) -> Result<Vec<(Vec<f64>, Result<UqpeEstimate>)>> {
    config.validate()?;
    let y = dataset.outcome();
    let ctx = SampleContext::new(y).stage(Stage::Density)?;
    let views = estimators.iter().map(|&e| models.view(e)).collect::<Result<Vec<_>>>()?;
    let q_hats = config
        .tau_set
        .iter()
        .map(|&t| empirical_quantile(y, t))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::PointEstimate)?;
    let f_hats = q_hats
        .iter()
        .map(|&q| ctx.checked_density(None, q))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Density)?;
    let mut points = Vec::with_capacity(views.len());
    for view in &views {
        let theta = q_hats
            .iter()
            .map(|&q| view.theta(y, q, None))
            .collect::<Result<Vec<_>>>()
            .stage(Stage::PointEstimate)?;
        let uqpe = theta.iter().zip(&f_hats).map(|(th, f)| -th / f).collect();
        points.push(PointEstimates {
            theta,
            f: f_hats.clone(),
            uqpe,
        });
    }
    let draws = run_bootstrap(
        &ctx,
        &views,
        &config.tau_set,
        &q_hats,
        config.bootstrap_reps,
        config.seed,
    )
    .stage(Stage::Bootstrap)?;
    Ok(estimators
        .iter()
        .zip(&points)
        .zip(&draws)
        .map(|((&e, point), d)| {
            let diag = diagnostics(&ctx, models, e, d);
            let est = summarize(config, dataset, e, &q_hats, point, d, diag).stage(Stage::Bootstrap);
            (point.uqpe.clone(), est)
        })
        .collect())
}

/// Point estimates and bootstrap inference for several estimators from
/// shared fits. All variants use the same multipliers, so their bands are
/// paired replicate by replicate.
pub fn estimate_with_models(
    dataset: &Dataset,
    config: &UqpeConfig,
    models: &FittedModels,
    estimators: &[Estimator],
) -> Result<Vec<UqpeEstimate>> {
    estimate_outcomes(dataset, config, models, estimators)?
        .into_iter()
        .map(|(_, est)| est)
        .collect()
}

/// Like [`estimate_variants`], but a variant whose bootstrap draws are
/// degenerate keeps its point estimates instead of failing the call.
pub fn estimate_variants_for_study(
    dataset: &Dataset,
    config: &UqpeConfig,
    estimators: &[Estimator],
) -> Result<Vec<VariantOutcome>> {
    let models = FittedModels::fit(dataset, config, estimators)?;
    estimate_outcomes(dataset, config, &models, estimators)?
        .into_iter()
        .map(|(uqpe, est)| match est {
            Ok(e) => Ok(VariantOutcome::Estimated(Box::new(e))),
            Err(e) if matches!(e.root(), UqpeError::DegenerateDraws) => Ok(VariantOutcome::NoInference {
                taus: config.tau_set.clone(),
                uqpe,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Fits and estimates several variants with paired bootstrap draws.
pub fn estimate_variants(
    dataset: &Dataset,
    config: &UqpeConfig,
    estimators: &[Estimator],
) -> Result<Vec<UqpeEstimate>> {
    let models = FittedModels::fit(dataset, config, estimators)?;
    estimate_with_models(dataset, config, &models, estimators)
}

/// Full pipeline for `config.estimator`.
pub fn estimate_all(dataset: &Dataset, config: &UqpeConfig) -> Result<UqpeEstimate> {
    Ok(estimate_variants(dataset, config, &[config.estimator])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uqpe_ratio() {
        assert_eq!(estimate_uqpe(-0.2, 0.4, 1e-4).unwrap(), 0.5);
        assert_eq!(estimate_uqpe(0.0, 0.4, 1e-4).unwrap(), 0.0);
        assert!(matches!(
            estimate_uqpe(1.0, 1e-6, 1e-4),
            Err(UqpeError::DensityFloor { .. })
        ));
    }

    #[test]
    fn default_grids() {
        let g = default_grid_taus();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 0.15);
        assert_eq!(g[40], 0.85);
        assert_eq!(g[2], 0.185);
        let t = default_tau_set();
        assert_eq!(
            t,
            vec![0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8]
        );
        let merged = UqpeConfig::default().effective_grid();
        assert!(t.iter().all(|x| merged.iter().any(|m| (m - x).abs() < 1e-12)));
        assert!(merged.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn config_validation() {
        assert!(UqpeConfig::default().validate().is_ok());
        let bad = [
            UqpeConfig {
                tau_set: vec![0.1],
                ..UqpeConfig::default()
            },
            UqpeConfig {
                alpha: 1.0,
                ..UqpeConfig::default()
            },
            UqpeConfig {
                bootstrap_reps: 1,
                ..UqpeConfig::default()
            },
            UqpeConfig {
                upsilon: (0.0, 0.8),
                ..UqpeConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in [Estimator::Debiased, Estimator::PluginOnly, Estimator::RifLogit] {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("ols".parse::<Estimator>().is_err());
    }
}
