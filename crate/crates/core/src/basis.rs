//! Polynomial dictionaries `b(x)` and `h(x)`.
//!
//! The dictionary holds an intercept followed by the marginal powers
//! `x_j^d` for `d = 1..=degree` (grouped by power, so degree 3 gives
//! `(1, x', (x^2)', (x^3)')`). Every power term is divided by its sample
//! standard deviation over the construction data. Terms are not centred, so
//! the derivative with respect to the treatment stays `d x^(d-1) / s`.

use crate::data::Dataset;
use crate::error::{Result, UqpeError};
use crate::matrix::ColMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Power { var: usize, power: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisExpansion {
    terms: Vec<Term>,
    scale_factors: Vec<f64>,
    p: usize,
    treatment_index: usize,
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

impl BasisExpansion {
    /// Builds the degree-`degree` dictionary over the dataset's covariates.
    pub fn build(dataset: &Dataset, degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(UqpeError::InvalidConfig("basis degree must be at least 1".into()));
        }
        if degree != 3 {
            log::warn!("basis degree {degree} is experimental; 3 is the default");
        }
        let x = dataset.covariates();
        let p = dataset.p();
        let mut terms = vec![Term::Intercept];
        let mut scale_factors = vec![1.0];
        for power in 1..=degree {
            for var in 0..p {
                let col = x.col(var);
                let sd = sample_sd(col.iter().map(|v| v.powi(power as i32)));
                if !(sd > 0.0) || !sd.is_finite() {
                    return Err(UqpeError::DegenerateBasis {
                        column: if power == 1 {
                            dataset.column_name(var)
                        } else {
                            format!("{}^{power}", dataset.column_name(var))
                        },
                    });
                }
                terms.push(Term::Power { var, power });
                scale_factors.push(sd);
            }
        }
        Ok(Self {
            terms,
            scale_factors,
            p,
            treatment_index: dataset.treatment_index(),
        })
    }

    /// Assembles a dictionary from explicit terms and scales.
    pub fn from_parts(terms: Vec<Term>, scale_factors: Vec<f64>, p: usize, treatment_index: usize) -> Result<Self> {
        if terms.len() != scale_factors.len() {
            return Err(UqpeError::Dimension {
                expected: terms.len(),
                got: scale_factors.len(),
            });
        }
        if treatment_index >= p {
            return Err(UqpeError::InvalidConfig("treatment index out of range".into()));
        }
        for (t, &s) in terms.iter().zip(&scale_factors) {
            if !(s > 0.0) {
                return Err(UqpeError::InvalidConfig("scale factors must be positive".into()));
            }
            match *t {
                Term::Intercept if s != 1.0 => {
                    return Err(UqpeError::InvalidConfig("intercept scale must be 1".into()))
                }
                Term::Power { var, power } if var >= p || power == 0 => {
                    return Err(UqpeError::InvalidConfig(format!("invalid term {t:?}")))
                }
                _ => {}
            }
        }
        Ok(Self {
            terms,
            scale_factors,
            p,
            treatment_index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn scale_factors(&self) -> &[f64] {
        &self.scale_factors
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn treatment_index(&self) -> usize {
        self.treatment_index
    }

    /// Index of the intercept term, if present.
    pub fn intercept_index(&self) -> Option<usize> {
        self.terms.iter().position(|t| *t == Term::Intercept)
    }

    /// Indices of the intercept and every power of the treatment.
    pub fn treatment_terms(&self) -> Vec<usize> {
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| match t {
                Term::Intercept => true,
                Term::Power { var, .. } => *var == self.treatment_index,
            })
            .map(|(k, _)| k)
            .collect()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(UqpeError::Dimension {
                expected: self.p,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(self
            .terms
            .iter()
            .zip(&self.scale_factors)
            .map(|(t, s)| match *t {
                Term::Intercept => 1.0,
                Term::Power { var, power } => x[var].powi(power as i32) / s,
            })
            .collect())
    }

    /// Derivative of every term with respect to `x[treatment_index]`.
    pub fn evaluate_derivative(&self, x: &[f64], treatment_index: usize) -> Result<Vec<f64>> {
        self.check_len(x)?;
        if treatment_index >= self.p {
            return Err(UqpeError::Dimension {
                expected: self.p,
                got: treatment_index,
            });
        }
        Ok(self
            .terms
            .iter()
            .zip(&self.scale_factors)
            .map(|(t, s)| match *t {
                Term::Power { var, power } if var == treatment_index => {
                    power as f64 * x[var].powi(power as i32 - 1) / s
                }
                _ => 0.0,
            })
            .collect())
    }

    /// Evaluates the dictionary at every row of `covariates` (N x p_b).
    pub fn design(&self, covariates: &ColMatrix) -> Result<ColMatrix> {
        if covariates.ncols() != self.p {
            return Err(UqpeError::Dimension {
                expected: self.p,
                got: covariates.ncols(),
            });
        }
        let n = covariates.nrows();
        let mut out = ColMatrix::zeros(n, self.dimension());
        for (k, (t, s)) in self.terms.iter().zip(&self.scale_factors).enumerate() {
            let dst = out.col_mut(k);
            match *t {
                Term::Intercept => dst.iter_mut().for_each(|v| *v = 1.0),
                Term::Power { var, power } => {
                    for (d, &x) in dst.iter_mut().zip(covariates.col(var)) {
                        *d = x.powi(power as i32) / s;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Treatment derivatives at every row, stored sparsely: only the
    /// treatment-power columns can be nonzero.
    pub fn derivative_design(&self, covariates: &ColMatrix) -> Result<DerivativeDesign> {
        if covariates.ncols() != self.p {
            return Err(UqpeError::Dimension {
                expected: self.p,
                got: covariates.ncols(),
            });
        }
        let x1 = covariates.col(self.treatment_index);
        let mut columns = Vec::new();
        for (k, (t, s)) in self.terms.iter().zip(&self.scale_factors).enumerate() {
            if let Term::Power { var, power } = *t {
                if var == self.treatment_index {
                    let c: Vec<f64> = x1
                        .iter()
                        .map(|&x| power as f64 * x.powi(power as i32 - 1) / s)
                        .collect();
                    columns.push((k, c));
                }
            }
        }
        Ok(DerivativeDesign {
            nrows: covariates.nrows(),
            ncols: self.dimension(),
            columns,
        })
    }
}

/// Row-wise treatment derivative of a dictionary, keeping only columns
/// that depend on the treatment.
#[derive(Debug, Clone)]
pub struct DerivativeDesign {
    nrows: usize,
    ncols: usize,
    columns: Vec<(usize, Vec<f64>)>,
}

impl DerivativeDesign {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Nonzero columns as `(term index, values)`.
    pub fn nonzero_columns(&self) -> &[(usize, Vec<f64>)] {
        &self.columns
    }

    /// Dense N x p_b copy.
    pub fn to_dense(&self) -> ColMatrix {
        let mut m = ColMatrix::zeros(self.nrows, self.ncols);
        for (k, c) in &self.columns {
            m.col_mut(*k).copy_from_slice(c);
        }
        m
    }

    /// `out_i = sum_k dB_ik beta_k`
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (k, c) in &self.columns {
            if beta[*k] != 0.0 {
                crate::matrix::axpy(beta[*k], c, &mut out);
            }
        }
        out
    }
}
