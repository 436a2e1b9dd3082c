use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg;
use crate::targets::GaussianMeasure;

/// Two Gaussian laws `(m₁, Σ₁)`, `(m₂, Σ₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKlInput {
    pub mean_p: Vec<f64>,
    pub cov_p: Vec<Vec<f64>>,
    pub mean_q: Vec<f64>,
    pub cov_q: Vec<Vec<f64>>,
}

impl GaussianKlInput {
    pub fn new(p: &GaussianMeasure, q: &GaussianMeasure) -> Self {
        Self {
            mean_p: p.mean().iter().copied().collect(),
            cov_p: linalg::matrix_to_rows(p.cov()),
            mean_q: q.mean().iter().copied().collect(),
            cov_q: linalg::matrix_to_rows(q.cov()),
        }
    }

    pub fn kl(&self) -> Result<f64> {
        let d = self.mean_p.len();
        check_dim(d, self.mean_q.len())?;
        gaussian_kl(
            &DVector::from_column_slice(&self.mean_p),
            &linalg::matrix_from_rows(&self.cov_p)?,
            &DVector::from_column_slice(&self.mean_q),
            &linalg::matrix_from_rows(&self.cov_q)?,
        )
    }
}

/// `KL(N(m₁,Σ₁) ‖ N(m₂,Σ₂))`.
pub fn gaussian_kl(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let d = m1.len();
    check_dim(d, m2.len())?;
    check_dim(d, s1.nrows())?;
    check_dim(d, s2.nrows())?;
    let (s2_inv, logdet2) = linalg::spd_inverse_logdet(s2, "second covariance")?;
    let (_, logdet1) = linalg::spd_inverse_logdet(s1, "first covariance")?;
    let diff = m2 - m1;
    let trace = (&s2_inv * s1).trace();
    let quad = diff.dot(&(&s2_inv * &diff));
    Ok((0.5 * (trace + quad - d as f64 + logdet2 - logdet1)).max(0.0))
}
