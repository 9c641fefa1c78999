//! Multiplier bootstrap: perturbed quantiles, densities and scores,
//! interquartile-range standard errors, sup-t critical values, bands and
//! the uniform zero-effect test.

use crate::density::{rank_from_shift, sorted_quantile};
use crate::error::{Result, UqpeError};
use crate::normal::normal_iqr;
use crate::rng::{normals, stream, Domain};
use crate::score::{SampleContext, ScoreView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Redraws allowed per replicate before giving up.
pub const MAX_REDRAWS: u8 = 5;

/// `n` i.i.d. standard normal multipliers for replicate `replicate`.
pub fn draw_multipliers(n: usize, master_seed: u64, replicate: u64) -> Vec<f64> {
    draw_multipliers_attempt(n, master_seed, replicate, 0)
}

fn draw_multipliers_attempt(n: usize, master_seed: u64, replicate: u64, attempt: u8) -> Vec<f64> {
    normals(&mut stream(master_seed, Domain::Bootstrap, replicate, attempt), n)
}

/// Bootstrap statistics of one variant, `B x T`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BootstrapDraws {
    pub theta_star: Vec<Vec<f64>>,
    pub uqpe_star: Vec<Vec<f64>>,
    pub q_star: Vec<Vec<f64>>,
    pub weight_sums: Vec<f64>,
    pub redraws: usize,
    pub clamp_count: usize,
}

impl BootstrapDraws {
    pub fn reps(&self) -> usize {
        self.theta_star.len()
    }

    /// Column `t` of a `B x T` matrix.
    pub fn column(rows: &[Vec<f64>], t: usize) -> Vec<f64> {
        rows.iter().map(|r| r[t]).collect()
    }
}

/// One replicate for every variant.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub q_star: Vec<f64>,
    /// `[variant][tau]`
    pub theta_star: Vec<Vec<f64>>,
    pub uqpe_star: Vec<Vec<f64>>,
    pub weight_sum: f64,
    pub clamps: usize,
}

/// Evaluates the bootstrap statistics for multipliers `eta`, reusing the
/// fitted nuisance predictions.
pub fn bootstrap_replicate(
    ctx: &SampleContext,
    views: &[ScoreView<'_>],
    taus: &[f64],
    q_hats: &[f64],
    eta: &[f64],
) -> Result<Replicate> {
    let n = ctx.n();
    if eta.len() != n {
        return Err(UqpeError::Dimension {
            expected: n,
            got: eta.len(),
        });
    }
    let weights: Vec<f64> = eta.iter().map(|e| e + 1.0).collect();
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum.abs() <= n as f64 * 1e-9 {
        return Err(UqpeError::DegenerateWeights);
    }
    let mut q_star = Vec::with_capacity(taus.len());
    let mut theta_star = vec![Vec::with_capacity(taus.len()); views.len()];
    let mut uqpe_star = vec![Vec::with_capacity(taus.len()); views.len()];
    let mut clamps = 0;
    for (&tau, &q_hat) in taus.iter().zip(q_hats) {
        let shift: f64 = ctx
            .y
            .iter()
            .zip(eta)
            .map(|(&y, &e)| e * (tau - if y <= q_hat { 1.0 } else { 0.0 }))
            .sum();
        let (r, clamped) = rank_from_shift(n, tau, shift);
        clamps += clamped as usize;
        let q = ctx.sorted_y[r - 1];
        let f = ctx.checked_density(Some(&weights), q)?;
        for (k, view) in views.iter().enumerate() {
            let th = view.theta(&ctx.y, q, Some(&weights))?;
            theta_star[k].push(th);
            uqpe_star[k].push(-th / f);
        }
        q_star.push(q);
    }
    Ok(Replicate {
        q_star,
        theta_star,
        uqpe_star,
        weight_sum,
        clamps,
    })
}

fn is_redrawable(e: &UqpeError) -> bool {
    matches!(
        e,
        UqpeError::DegenerateWeights | UqpeError::DensityFloor { .. } | UqpeError::Extrapolation { .. }
    )
}

/// Runs `reps` replicates in parallel; replicate `b` draws from its own
/// stream so the result does not depend on scheduling. Returns one
/// [`BootstrapDraws`] per view.
pub fn run_bootstrap(
    ctx: &SampleContext,
    views: &[ScoreView<'_>],
    taus: &[f64],
    q_hats: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<BootstrapDraws>> {
    let results: Vec<(Replicate, usize)> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut attempt = 0u8;
            loop {
                let eta = draw_multipliers_attempt(ctx.n(), seed, b as u64, attempt);
                match bootstrap_replicate(ctx, views, taus, q_hats, &eta) {
                    Ok(r) => return Ok((r, attempt as usize)),
                    Err(e) if is_redrawable(&e) && attempt < MAX_REDRAWS => attempt += 1,
                    Err(e) if is_redrawable(&e) => {
                        log::warn!("replicate {b}: {e}");
                        return Err(UqpeError::RedrawsExhausted(MAX_REDRAWS as usize));
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut out = vec![BootstrapDraws::default(); views.len()];
    for (rep, redraws) in results {
        for (k, d) in out.iter_mut().enumerate() {
            d.theta_star.push(rep.theta_star[k].clone());
            d.uqpe_star.push(rep.uqpe_star[k].clone());
            d.q_star.push(rep.q_star.clone());
            d.weight_sums.push(rep.weight_sum);
            d.redraws += redraws;
            d.clamp_count += rep.clamps;
        }
    }
    Ok(out)
}

/// Type-1 empirical quantile (the `ceil(B tau)`-th order statistic).
pub fn empirical_quantile_of(values: &[f64], tau: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_quantile(&v, tau)
}

/// `(Q(0.75) - Q(0.25)) / (Phi^-1(0.75) - Phi^-1(0.25))`.
pub fn se_iqr(draws: &[f64]) -> Result<f64> {
    if draws.len() < 4 {
        return Err(UqpeError::InvalidConfig(format!(
            "se_iqr needs at least 4 draws, got {}",
            draws.len()
        )));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(UqpeError::NonFinite("bootstrap draws"));
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&v, 0.75) - sorted_quantile(&v, 0.25);
    if !(iqr > 0.0) {
        return Err(UqpeError::DegenerateDraws);
    }
    Ok(iqr / normal_iqr())
}

/// `(1 - alpha)` quantile over draws of `max_t |(draw_bt - point_t) / sigma_t|`.
pub fn uniform_critical_value(draws_star: &[Vec<f64>], point: &[f64], sigma: &[f64], alpha: f64) -> Result<f64> {
    if draws_star.is_empty() {
        return Err(UqpeError::InvalidConfig("no bootstrap draws".into()));
    }
    if point.len() != sigma.len() {
        return Err(UqpeError::Dimension {
            expected: point.len(),
            got: sigma.len(),
        });
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(UqpeError::InvalidConfig("standard errors must be positive".into()));
    }
    let mut sup = Vec::with_capacity(draws_star.len());
    for row in draws_star {
        if row.len() != point.len() {
            return Err(UqpeError::Dimension {
                expected: point.len(),
                got: row.len(),
            });
        }
        let s = row
            .iter()
            .zip(point)
            .zip(sigma)
            .map(|((d, p), s)| ((d - p) / s).abs())
            .fold(0.0, f64::max);
        if !s.is_finite() || row.iter().any(|d| !d.is_finite()) {
            return Err(UqpeError::NonFinite("bootstrap sup statistic"));
        }
        sup.push(s);
    }
    Ok(empirical_quantile_of(&sup, 1.0 - alpha))
}

/// Per-tau critical values: the single-point case of the sup statistic.
pub fn pointwise_critical_values(
    draws_star: &[Vec<f64>],
    point: &[f64],
    sigma: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    (0..point.len())
        .map(|t| {
            let col: Vec<Vec<f64>> = draws_star.iter().map(|r| vec![r[t]]).collect();
            uniform_critical_value(&col, &point[t..=t], &sigma[t..=t], alpha)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub pointwise: Interval,
    pub uniform: Interval,
}

/// `point +- sigma * c` with the uniform and per-tau pointwise critical values.
pub fn build_bands(point: &[f64], sigma: &[f64], c_uniform: f64, c_pointwise: &[f64]) -> Vec<Band> {
    point
        .iter()
        .zip(sigma)
        .zip(c_pointwise)
        .map(|((&p, &s), &cp)| Band {
            pointwise: Interval {
                lo: p - s * cp,
                hi: p + s * cp,
            },
            uniform: Interval {
                lo: p - s * c_uniform,
                hi: p + s * c_uniform,
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Reject,
    FailToReject,
}

/// Rejects `UQPE(tau) = 0 for all tau` when zero leaves the theta band at
/// some evaluation point.
pub fn test_zero_uqpe(theta_band: &[Interval]) -> Verdict {
    if theta_band.iter().any(|b| !b.contains(0.0)) {
        Verdict::Reject
    } else {
        Verdict::FailToReject
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::phi_inv;

    #[test]
    fn multipliers_are_reproducible() {
        assert_eq!(draw_multipliers(10, 3, 1), draw_multipliers(10, 3, 1));
        assert_ne!(draw_multipliers(10, 3, 1)[0], draw_multipliers(10, 3, 2)[0]);
        assert_ne!(draw_multipliers(10, 3, 1)[0], draw_multipliers(10, 4, 1)[0]);
    }

    #[test]
    fn multiplier_mean_is_near_zero() {
        let eta = draw_multipliers(1_000_000, 11, 0);
        let mean = eta.iter().sum::<f64>() / eta.len() as f64;
        assert!(mean.abs() < 4.0 / 1000.0);
    }

    fn normal_grid(b: usize) -> Vec<f64> {
        (1..=b).map(|k| phi_inv((k as f64 - 0.5) / b as f64)).collect()
    }

    #[test]
    fn se_iqr_examples() {
        assert!((se_iqr(&normal_grid(100_000)).unwrap() - 1.0).abs() < 1e-3);
        let scaled: Vec<f64> = normal_grid(1000).iter().map(|v| -3.0 * v).collect();
        assert!((se_iqr(&scaled).unwrap() - 3.0 * se_iqr(&normal_grid(1000)).unwrap()).abs() < 1e-12);
        assert!((se_iqr(&[0.0, 0.0, 1.0, 1.0]).unwrap() - 0.741_301_109_252_801).abs() < 1e-12);
        assert!(matches!(se_iqr(&[2.0; 10]), Err(UqpeError::DegenerateDraws)));
        assert!(se_iqr(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn critical_value_examples() {
        let draws: Vec<Vec<f64>> = normal_grid(100_000).into_iter().map(|v| vec![v]).collect();
        let c = uniform_critical_value(&draws, &[0.0], &[1.0], 0.05).unwrap();
        assert!((c - 1.959_964).abs() < 1e-3);
        let pw = pointwise_critical_values(&draws, &[0.0], &[1.0], 0.05).unwrap();
        assert_eq!(pw[0], c);
        let dup: Vec<Vec<f64>> = draws.iter().map(|r| vec![r[0], r[0]]).collect();
        assert_eq!(uniform_critical_value(&dup, &[0.0, 0.0], &[1.0, 1.0], 0.05).unwrap(), c);
        let bad = vec![vec![f64::NAN]; 4];
        assert!(uniform_critical_value(&bad, &[0.0], &[1.0], 0.05).is_err());
    }

    #[test]
    fn band_examples() {
        let b = build_bands(&[0.0], &[1.0], 2.0, &[1.5]);
        assert_eq!(b[0].uniform, Interval { lo: -2.0, hi: 2.0 });
        assert!(b[0].uniform.lo <= b[0].pointwise.lo && b[0].pointwise.hi <= b[0].uniform.hi);
    }

    #[test]
    fn zero_test_examples() {
        let straddle = Interval { lo: -0.2, hi: 0.3 };
        assert_eq!(
            test_zero_uqpe(&[straddle, Interval { lo: 0.1, hi: 0.5 }]),
            Verdict::Reject
        );
        assert_eq!(test_zero_uqpe(&[straddle, straddle]), Verdict::FailToReject);
    }
}
