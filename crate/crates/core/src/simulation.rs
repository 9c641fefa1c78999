//! Gaussian partially linear designs, oracle UQPE values and the Monte
//! Carlo harness.
//!
//! `X_-1 ~ N(0, S)` with `S[r][c] = 0.5^(2(|r-c|+1))`,
//! `X_1 | X_-1 ~ N(gamma' X_-1, 1)` and `Y | X ~ N(g(X_1) + alpha' X_-1, 1)`
//! with `alpha = gamma`.

use crate::data::Dataset;
use crate::error::{Result, UqpeError};
use crate::estimator::{estimate_variants_for_study, Estimator, UqpeConfig, VariantOutcome};
use crate::matrix::ColMatrix;
use crate::normal::{phi_cdf, phi_inv, phi_pdf};
use crate::rng::{child_seed, normals, stream, Domain};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dgp {
    /// `g(x) = x`
    #[serde(rename = "1")]
    Linear,
    /// `g(x) = x - 0.1 x^2`
    #[serde(rename = "2")]
    Quadratic,
    /// `g(x) = x - 0.1 x^2 + 0.01 x^3`
    #[serde(rename = "3")]
    Cubic,
}

impl Dgp {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Dgp::Linear),
            2 => Some(Dgp::Quadratic),
            3 => Some(Dgp::Cubic),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Dgp::Linear => 1,
            Dgp::Quadratic => 2,
            Dgp::Cubic => 3,
        }
    }

    pub fn g(self, x: f64) -> f64 {
        match self {
            Dgp::Linear => x,
            Dgp::Quadratic => x - 0.1 * x * x,
            Dgp::Cubic => x - 0.1 * x * x + 0.01 * x * x * x,
        }
    }

    pub fn g_prime(self, x: f64) -> f64 {
        match self {
            Dgp::Linear => 1.0,
            Dgp::Quadratic => 1.0 - 0.2 * x,
            Dgp::Cubic => 1.0 - 0.2 * x + 0.03 * x * x,
        }
    }
}

/// Coefficient decay: `alpha_j = 0.5^((j + 2(k - 1)) / k)` for `j = 2..p`
/// with `k = 1, 2, 3, 4` for designs (i) to (iv).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sparsity {
    I,
    Ii,
    Iii,
    Iv,
}

impl Sparsity {
    pub fn k(self) -> u32 {
        match self {
            Sparsity::I => 1,
            Sparsity::Ii => 2,
            Sparsity::Iii => 3,
            Sparsity::Iv => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sparsity::I => "i",
            Sparsity::Ii => "ii",
            Sparsity::Iii => "iii",
            Sparsity::Iv => "iv",
        }
    }

    /// `alpha_j` for the 1-based covariate index `j >= 2`.
    pub fn coefficient(self, j: usize) -> f64 {
        let k = self.k() as f64;
        0.5f64.powf((j as f64 + 2.0 * (k - 1.0)) / k)
    }
}

impl std::str::FromStr for Sparsity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Sparsity::I),
            "ii" | "2" => Ok(Sparsity::Ii),
            "iii" | "3" => Ok(Sparsity::Iii),
            "iv" | "4" => Ok(Sparsity::Iv),
            other => Err(format!("unknown sparsity design `{other}` (i, ii, iii, iv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub dgp: Dgp,
    pub sparsity: Sparsity,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(UqpeError::InvalidConfig(format!("p = {} must be at least 2", self.p)));
        }
        if self.n < 2 {
            return Err(UqpeError::InvalidConfig(format!("N = {} must be at least 2", self.n)));
        }
        Ok(())
    }

    /// `(alpha_2, ..., alpha_p)`; also the `gamma` vector.
    pub fn coefficients(&self) -> Vec<f64> {
        (2..=self.p).map(|j| self.sparsity.coefficient(j)).collect()
    }
}

/// `S[r][c] = 0.5^(2(|r-c|+1))`, dimension `m`.
pub fn control_covariance(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |r, c| 0.5f64.powi(2 * (r.abs_diff(c) as i32 + 1)))
}

/// `alpha' S alpha`, the variance of the control index.
pub fn index_variance(sparsity: Sparsity, p: usize) -> f64 {
    let a = nalgebra::DVector::from_iterator(p - 1, (2..=p).map(|j| sparsity.coefficient(j)));
    (a.transpose() * control_covariance(p - 1) * &a)[(0, 0)]
}

/// Draws datasets for one design, reusing the Cholesky factor.
#[derive(Debug, Clone)]
pub struct DgpSampler {
    spec: DgpSpec,
    coefficients: Vec<f64>,
    /// Lower Cholesky factor of the control covariance, row-major.
    chol: Vec<f64>,
}

impl DgpSampler {
    pub fn new(spec: DgpSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.p - 1;
        let l = control_covariance(m)
            .cholesky()
            .ok_or_else(|| UqpeError::InvalidConfig("control covariance is not positive definite".into()))?
            .l();
        let chol = (0..m)
            .flat_map(|r| (0..m).map(move |c| (r, c)))
            .map(|(r, c)| l[(r, c)])
            .collect();
        Ok(Self {
            spec,
            coefficients: spec.coefficients(),
            chol,
        })
    }

    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    /// One dataset; column 0 is the treatment `x1`, columns `1..p` the controls.
    pub fn draw(&self, seed: u64) -> Result<Dataset> {
        let DgpSpec { n, p, dgp, .. } = self.spec;
        let m = p - 1;
        let mut rng = stream(seed, Domain::Dataset, 0, 0);
        let mut cols = vec![vec![0.0; n]; p];
        let mut y = vec![0.0; n];
        let mut controls = vec![0.0; m];
        for i in 0..n {
            let z = normals(&mut rng, m + 2);
            for r in 0..m {
                let row = &self.chol[r * m..r * m + r + 1];
                controls[r] = row.iter().zip(&z[..=r]).map(|(a, b)| a * b).sum();
            }
            let index: f64 = self.coefficients.iter().zip(&controls).map(|(a, b)| a * b).sum();
            let x1 = index + z[m];
            y[i] = dgp.g(x1) + index + z[m + 1];
            cols[0][i] = x1;
            for r in 0..m {
                cols[r + 1][i] = controls[r];
            }
        }
        Dataset::new(y, ColMatrix::from_columns(&cols), 0)
    }
}

/// Draws one dataset (builds a fresh sampler).
pub fn simulate_dataset(spec: &DgpSpec, rep_seed: u64) -> Result<Dataset> {
    DgpSampler::new(*spec)?.draw(rep_seed)
}

/// Closed-form truth for the linear design: `Y ~ N(0, 4v + 2)`, so
/// `q_tau`, `f_Y(q_tau)` and `theta = -f_Y(q_tau)` (UQPE = 1).
pub fn linear_truth(sparsity: Sparsity, p: usize, tau: f64) -> (f64, f64, f64) {
    let sd = (4.0 * index_variance(sparsity, p) + 2.0).sqrt();
    let q = sd * phi_inv(tau);
    let f = phi_pdf(q / sd) / sd;
    (q, f, -f)
}

const ORACLE_CHUNK: usize = 100_000;

/// Reduction of the design to `mu = g(Z + e) + Z`, `X1 = Z + e`, with
/// `Z ~ N(0, v)` and `e ~ N(0, 1)`; sums `f(mu, g'(X1))` over `n0` draws.
fn oracle_pass<const K: usize>(
    dgp: Dgp,
    v: f64,
    n0: usize,
    seed: u64,
    f: impl Fn(f64, f64) -> [f64; K] + Sync,
) -> [f64; K] {
    let chunks = n0.div_ceil(ORACLE_CHUNK);
    let sd = v.sqrt();
    let partial: Vec<[f64; K]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORACLE_CHUNK.min(n0 - c * ORACLE_CHUNK);
            let z = normals(&mut stream(seed, Domain::Oracle, c as u64, 0), 2 * len);
            let mut acc = [0.0; K];
            for pair in z.chunks_exact(2) {
                let zi = sd * pair[0];
                let x1 = zi + pair[1];
                let out = f(dgp.g(x1) + zi, dgp.g_prime(x1));
                for k in 0..K {
                    acc[k] += out[k];
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; K];
    for acc in partial {
        for k in 0..K {
            total[k] += acc[k];
        }
    }
    total
}

/// Oracle UQPE curve from `n0` simulated covariate draws, using
/// `Y | X ~ N(mu(X), 1)`: `q_tau` solves `mean Phi(q - mu) = tau` and
/// `UQPE = mean[phi(q - mu) g'(X1)] / mean[phi(q - mu)]`.
pub fn true_uqpe_curve(dgp: Dgp, sparsity: Sparsity, p: usize, taus: &[f64], n0: usize, seed: u64) -> Result<Vec<f64>> {
    if p < 2 || n0 == 0 {
        return Err(UqpeError::InvalidConfig("oracle needs p >= 2 and n0 >= 1".into()));
    }
    if taus.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(UqpeError::InvalidConfig("oracle taus must lie in (0, 1)".into()));
    }
    let v = index_variance(sparsity, p);
    let nf = n0 as f64;
    let [s1, s2] = oracle_pass(dgp, v, n0, seed, |mu, _| [mu, mu * mu]);
    let mean = s1 / nf;
    let sd_y = (s2 / nf - mean * mean + 1.0).sqrt();
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut q = mean + sd_y * phi_inv(tau);
        for _ in 0..50 {
            let [cdf, pdf] = oracle_pass(dgp, v, n0, seed, |mu, _| [phi_cdf(q - mu), phi_pdf(q - mu)]);
            let step = (cdf / nf - tau) / (pdf / nf);
            q -= step;
            if step.abs() < 1e-12 * (1.0 + q.abs()) {
                break;
            }
        }
        let [num, den] = oracle_pass(dgp, v, n0, seed, |mu, gp| {
            let d = phi_pdf(q - mu);
            [d * gp, d]
        });
        out.push(num / den);
    }
    Ok(out)
}

/// Oracle UQPE at a single `tau`.
pub fn true_uqpe_oracle(spec: &DgpSpec, tau: f64, n0: usize) -> Result<f64> {
    Ok(true_uqpe_curve(spec.dgp, spec.sparsity, spec.p, &[tau], n0, spec.seed)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMetrics {
    pub tau: f64,
    pub true_uqpe: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    pub sd: f64,
    /// Average bootstrap standard error.
    pub mean_se: f64,
    pub pointwise_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMetrics {
    pub dgp: u8,
    pub sparsity: String,
    pub n: usize,
    pub p: usize,
    pub estimator: Estimator,
    pub reps: usize,
    pub failures: usize,
    /// Replications kept with point estimates only because their bootstrap
    /// draws were degenerate; they count as not covering.
    pub no_inference: usize,
    pub rows: Vec<TauMetrics>,
    pub uniform_coverage: f64,
    pub runtime_secs: f64,
}

impl McMetrics {
    pub fn row(&self, tau: f64) -> Option<&TauMetrics> {
        self.rows.iter().find(|r| (r.tau - tau).abs() < 1e-9)
    }

    /// Aggregates successful replications against `truth` (aligned with
    /// the estimator's tau set). Replications without inference enter the
    /// mean, bias and RMSE but never cover.
    pub fn from_estimates(
        spec: &DgpSpec,
        estimator: Estimator,
        outcomes: &[&VariantOutcome],
        truth: &[f64],
        failures: usize,
    ) -> Self {
        let reps = outcomes.len();
        let rf = reps.max(1) as f64;
        let values: Vec<Vec<f64>> = outcomes.iter().map(|o| o.uqpe()).collect();
        let estimated: Vec<_> = outcomes.iter().filter_map(|o| o.estimate()).collect();
        let taus: Vec<f64> = match outcomes.first() {
            Some(VariantOutcome::Estimated(e)) => e.rows.iter().map(|r| r.tau).collect(),
            Some(VariantOutcome::NoInference { taus, .. }) => taus.clone(),
            None => Vec::new(),
        };
        let rows = taus
            .iter()
            .enumerate()
            .map(|(k, &tau)| {
                let vals: Vec<f64> = values.iter().map(|v| v[k]).collect();
                let mean = vals.iter().sum::<f64>() / rf;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rf;
                let mse = vals.iter().map(|v| (v - truth[k]).powi(2)).sum::<f64>() / rf;
                let covered = estimated
                    .iter()
                    .filter(|e| e.rows[k].uqpe_band.pointwise.contains(truth[k]))
                    .count();
                TauMetrics {
                    tau,
                    true_uqpe: truth[k],
                    mean,
                    bias: mean - truth[k],
                    rmse: mse.sqrt(),
                    sd: var.sqrt(),
                    mean_se: estimated.iter().map(|e| e.rows[k].se_uqpe).sum::<f64>() / estimated.len().max(1) as f64,
                    pointwise_coverage: covered as f64 / rf,
                }
            })
            .collect();
        let uniform = estimated
            .iter()
            .filter(|e| e.rows.iter().zip(truth).all(|(r, &t)| r.uqpe_band.uniform.contains(t)))
            .count();
        Self {
            dgp: spec.dgp.id(),
            sparsity: spec.sparsity.label().to_string(),
            n: spec.n,
            p: spec.p,
            estimator,
            reps,
            failures,
            no_inference: reps - estimated.len(),
            rows,
            uniform_coverage: uniform as f64 / rf,
            runtime_secs: 0.0,
        }
    }
}

/// Seed of replication `rep`.
pub fn replication_seed(study_seed: u64, rep: usize) -> u64 {
    child_seed(study_seed, rep as u64)
}

/// Monte Carlo study of several estimators on shared datasets and shared
/// bootstrap multipliers. `truth` holds the true UQPE at each
/// `config.tau_set` point. Replications that fail are excluded; more than
/// 5% failures abort the study.
pub fn run_mc_study(
    spec: &DgpSpec,
    reps: usize,
    config: &UqpeConfig,
    estimators: &[Estimator],
    truth: &[f64],
) -> Result<Vec<McMetrics>> {
    if reps == 0 {
        return Err(UqpeError::InvalidConfig("reps must be positive".into()));
    }
    if truth.len() != config.tau_set.len() {
        return Err(UqpeError::Dimension {
            expected: config.tau_set.len(),
            got: truth.len(),
        });
    }
    config.validate()?;
    let sampler = DgpSampler::new(*spec)?;
    let start = Instant::now();
    let outcomes: Vec<Result<Vec<VariantOutcome>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(spec.seed, rep);
            let dataset = sampler.draw(seed)?;
            let cfg = UqpeConfig {
                seed: child_seed(seed, u64::MAX),
                ..config.clone()
            };
            estimate_variants_for_study(&dataset, &cfg, estimators)
        })
        .collect();
    let runtime = start.elapsed().as_secs_f64();
    let mut failures = 0;
    let mut ok = Vec::with_capacity(reps);
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(est) => ok.push(est),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures += 1;
            }
        }
    }
    if failures as f64 > 0.05 * reps as f64 {
        return Err(UqpeError::StudyFailed { failed: failures, reps });
    }
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let per: Vec<&VariantOutcome> = ok.iter().map(|v| &v[k]).collect();
            McMetrics {
                runtime_secs: runtime,
                ..McMetrics::from_estimates(spec, e, &per, truth, failures)
            }
        })
        .collect())
}

/// Header of the metrics CSV.
pub const METRICS_HEADER: [&str; 12] = [
    "dgp",
    "sparsity",
    "n",
    "p",
    "estimator",
    "tau",
    "true",
    "mean",
    "bias",
    "rmse",
    "pointwise",
    "uniform",
];

/// Writes one row per `(study, tau)`, restricted to `taus` when given.
pub fn write_metrics_csv<W: std::io::Write>(out: W, metrics: &[McMetrics], taus: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        for r in &m.rows {
            if taus.is_some_and(|ts| !ts.iter().any(|t| (t - r.tau).abs() < 1e-9)) {
                continue;
            }
            w.write_record([
                m.dgp.to_string(),
                m.sparsity.clone(),
                m.n.to_string(),
                m.p.to_string(),
                m.estimator.to_string(),
                format!("{:.2}", r.tau),
                format!("{:.4}", r.true_uqpe),
                format!("{:.4}", r.mean),
                format!("{:.4}", r.bias),
                format!("{:.4}", r.rmse),
                format!("{:.3}", r.pointwise_coverage),
                format!("{:.3}", m.uniform_coverage),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
