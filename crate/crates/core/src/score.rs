//! The doubly robust score evaluated from grid predictions.
//!
//! `theta(q) = sum_i w_i [m1(X_i, q) - omega(X_i)(1{Y_i <= q} - m0(X_i, q))] / sum_i w_i`
//! with unit weights for the point estimate and `eta_i + 1` in the
//! bootstrap. Dropping `omega` gives the plug-in (non-debiased) average
//! of `m1`.

use crate::density::{bandwidth_rot, kde, sorted, weighted_kde, KernelSpec};
use crate::error::{Result, UqpeError};
use crate::lasso_logit::{GridPredictions, QGridFits};

/// Outcome-only quantities shared by every estimator variant.
#[derive(Debug, Clone)]
pub struct SampleContext {
    pub y: Vec<f64>,
    pub sorted_y: Vec<f64>,
    pub h1: f64,
    pub kernel: KernelSpec,
    pub f_floor: f64,
}

/// `1e-4 / range(Y)`.
pub fn density_floor(y: &[f64]) -> f64 {
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    1e-4 / (hi - lo)
}

impl SampleContext {
    pub fn new(y: &[f64]) -> Result<Self> {
        let h1 = bandwidth_rot(y)?;
        Ok(Self {
            y: y.to_vec(),
            sorted_y: sorted(y),
            h1,
            kernel: KernelSpec::Epanechnikov,
            f_floor: density_floor(y),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn density(&self, at: f64) -> f64 {
        kde(&self.y, at, self.h1, self.kernel)
    }

    pub fn weighted_density(&self, weights: &[f64], at: f64) -> Result<f64> {
        weighted_kde(&self.y, weights, at, self.h1, self.kernel)
    }

    /// Density at `at`, rejecting values at or below the floor.
    pub fn checked_density(&self, weights: Option<&[f64]>, at: f64) -> Result<f64> {
        let f = match weights {
            Some(w) => self.weighted_density(w, at)?,
            None => self.density(at),
        };
        if !(f > self.f_floor) {
            return Err(UqpeError::DensityFloor { f, floor: self.f_floor });
        }
        Ok(f)
    }
}

/// Borrowed nuisance predictions for one estimator variant.
#[derive(Debug, Clone, Copy)]
pub struct ScoreView<'a> {
    pub fits: &'a QGridFits,
    pub preds: &'a GridPredictions,
    /// `None` drops the correction term.
    pub omega: Option<&'a [f64]>,
}

impl ScoreView<'_> {
    /// Weighted score average at threshold `q`.
    pub fn theta(&self, y: &[f64], q: f64, weights: Option<&[f64]>) -> Result<f64> {
        let g = self.fits.nearest_index(q, self.fits.default_tolerance())?;
        let m0 = &self.preds.m0[g];
        let m1 = &self.preds.m1[g];
        let n = y.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let mut s = m1[i];
            if let Some(om) = self.omega {
                let ind = if y[i] <= q { 1.0 } else { 0.0 };
                s -= om[i] * (ind - m0[i]);
            }
            let w = weights.map_or(1.0, |w| w[i]);
            num += w * s;
            den += w;
        }
        if den.abs() <= n as f64 * 1e-9 {
            return Err(UqpeError::DegenerateWeights);
        }
        Ok(num / den)
    }
}
