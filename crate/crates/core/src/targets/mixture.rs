use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::log_sum_exp;

use super::{GaussianMeasure, Reg};

/// Finite Gaussian mixture `Σ_k w_k N(μ_k, Σ_k)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    log_weights: Vec<f64>,
    components: Vec<GaussianMeasure>,
}

/// Tilted mixture: reweighted component posteriors.
#[derive(Debug, Clone)]
pub struct MixturePosterior {
    pub log_weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub log_z: f64,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl GaussianMixture {
    pub fn new(components: Vec<(f64, GaussianMeasure)>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let d = first.1.dim();
        let mut total = 0.0;
        for (w, g) in &components {
            check_dim(d, g.dim())?;
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(Error::InvalidArgument(format!("mixture weight {w} outside (0, 1]")));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        let (log_weights, components) = components.into_iter().map(|(w, g)| (w.ln(), g)).unzip();
        Ok(Self { log_weights, components })
    }

    /// Equal-weight two-component mixture `½N(−a, σ²I) + ½N(a, σ²I)`.
    pub fn symmetric_pair(a: DVector<f64>, var: f64) -> Result<Self> {
        Self::new(vec![
            (0.5, GaussianMeasure::isotropic(-a.clone(), var)?),
            (0.5, GaussianMeasure::isotropic(a, var)?),
        ])
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[GaussianMeasure] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .zip(&self.log_weights)
            .fold(DVector::zeros(self.dim()), |acc, (g, lw)| acc + g.mean() * lw.exp())
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        log_sum_exp(
            self.components
                .iter()
                .zip(&self.log_weights)
                .map(|(g, lw)| lw + g.log_density(x)),
        )
    }

    pub fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(g, lw)| lw + g.log_density(x))
            .collect();
        let lse = log_sum_exp(logs.iter().copied());
        self.components
            .iter()
            .zip(&logs)
            .fold(DVector::zeros(self.dim()), |acc, (g, l)| {
                acc + g.grad_log_density(x) * (l - lse).exp()
            })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = pick_component(&self.log_weights, rng);
        self.components[k].sample(rng)
    }

    pub fn tilt_posterior(&self, c: &DVector<f64>, reg: &Reg) -> Result<MixturePosterior> {
        let mut log_weights = Vec::with_capacity(self.components.len());
        let mut means = Vec::with_capacity(self.components.len());
        let mut covs = Vec::with_capacity(self.components.len());
        for (g, lw) in self.components.iter().zip(&self.log_weights) {
            let p = g.tilt_posterior(c, reg)?;
            log_weights.push(lw + p.log_z);
            means.push(p.mean);
            covs.push(p.cov);
        }
        let log_z = log_sum_exp(log_weights.iter().copied());
        for lw in &mut log_weights {
            *lw -= log_z;
        }
        Ok(MixturePosterior { log_weights, means, covs, log_z })
    }

    /// Posterior mean under scalar regularization without forming covariances.
    pub fn tilt_mean_scalar(&self, c: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut logs = Vec::with_capacity(self.components.len());
        let mut means = Vec::with_capacity(self.components.len());
        for (g, lw) in self.components.iter().zip(&self.log_weights) {
            let mean = g.tilt_mean_scalar(c, t);
            logs.push(lw + scalar_log_z(g, c, t, &mean));
            means.push(mean);
        }
        let lse = log_sum_exp(logs.iter().copied());
        means
            .into_iter()
            .zip(&logs)
            .fold(DVector::zeros(self.dim()), |acc, (m, l)| acc + m * (l - lse).exp())
    }

    /// Lower bound on `−∇² log π` when every component shares the covariance
    /// `σ²I`: `1/σ² − r²/σ⁴` with `r` the largest distance from a component
    /// mean to the centroid of the means. `None` when the covariances differ or
    /// the bound is not positive.
    pub fn log_curvature_lower_bound(&self) -> Option<f64> {
        let first = self.components[0].cov();
        let d = self.dim();
        let var = first[(0, 0)];
        let iso = DMatrix::identity(d, d) * var;
        if self.components.iter().any(|g| (g.cov() - &iso).amax() > 1e-14 * var) {
            return None;
        }
        let k = self.components.len() as f64;
        let centroid = self
            .components
            .iter()
            .fold(DVector::zeros(d), |acc, g| acc + g.mean())
            / k;
        let r2 = self
            .components
            .iter()
            .map(|g| (g.mean() - &centroid).norm_squared())
            .fold(0.0, f64::max);
        let bound = 1.0 / var - r2 / (var * var);
        (bound > 0.0).then_some(bound)
    }
}

impl GaussianMixture {
    /// Uniform bound `α` with `Cov(π tilted by e^{⟨y,x⟩}) ⪯ αI` for all `y`,
    /// available when every component shares one covariance `Σ`: tilting
    /// shifts every mean by `Σy`, so the bound is `‖Σ‖_op` plus the largest
    /// squared distance from a component mean to the centroid of the means.
    pub fn tilt_covariance_bound(&self) -> Option<f64> {
        let first = self.components[0].cov();
        let scale = first.amax();
        if self.components.iter().any(|g| (g.cov() - first).amax() > 1e-14 * scale) {
            return None;
        }
        let k = self.components.len() as f64;
        let centroid = self.components.iter().fold(DVector::zeros(self.dim()), |acc, g| acc + g.mean()) / k;
        let r2 = self
            .components
            .iter()
            .map(|g| (g.mean() - &centroid).norm_squared())
            .fold(0.0, f64::max);
        Some(self.components[0].cov_op_norm() + r2)
    }
}

/// `log_z` of a Gaussian tilt given its already-computed posterior mean.
fn scalar_log_z(g: &GaussianMeasure, c: &DVector<f64>, t: f64, mean: &DVector<f64>) -> f64 {
    let t = t.min(super::MAX_REG);
    let b = g.precision() * g.mean() + c;
    let log_det_term: f64 = g.eigenvalues().iter().map(|l| (t * l).ln_1p()).sum();
    let mu_p_mu = g.mean().dot(&(g.precision() * g.mean()));
    0.5 * b.dot(mean) - 0.5 * mu_p_mu - 0.5 * log_det_term
}

pub(crate) fn pick_component<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, lw) in log_weights.iter().enumerate() {
        acc += lw.exp();
        if u < acc {
            return k;
        }
    }
    log_weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        let g = GaussianMeasure::standard(1).unwrap();
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![(0.6, g.clone()), (0.6, g.clone())]).is_err());
        assert!(GaussianMixture::new(vec![(1.0, g.clone()), (0.0, g)]).is_err());
    }

    #[test]
    fn fast_mean_matches_full_posterior() {
        let m = GaussianMixture::new(vec![
            (0.3, GaussianMeasure::scalar(-2.0, 0.5).unwrap()),
            (0.7, GaussianMeasure::scalar(1.0, 2.0).unwrap()),
        ])
        .unwrap();
        let c = DVector::from_element(1, 0.7);
        let full = m.tilt_posterior(&c, &Reg::Scalar(1.3)).unwrap();
        let mean = full
            .means
            .iter()
            .zip(&full.log_weights)
            .fold(0.0, |acc, (mu, lw)| acc + mu[0] * lw.exp());
        assert!((m.tilt_mean_scalar(&c, 1.3)[0] - mean).abs() < 1e-14);
    }

    #[test]
    fn large_tilts_do_not_underflow() {
        let m = GaussianMixture::symmetric_pair(DVector::from_element(1, 3.0), 1.0).unwrap();
        let p = m.tilt_posterior(&DVector::from_element(1, 1e6), &Reg::Scalar(1e5)).unwrap();
        assert!(p.log_weights.iter().all(|w| w.is_finite() || *w == f64::NEG_INFINITY));
        assert!((p.log_weights[1]).abs() < 1e-12);
    }

    #[test]
    fn curvature_bound_two_atoms() {
        let m = GaussianMixture::symmetric_pair(DVector::from_element(1, 0.5), 1.0).unwrap();
        assert!((m.log_curvature_lower_bound().unwrap() - 0.75).abs() < 1e-15);
        let far = GaussianMixture::symmetric_pair(DVector::from_element(1, 2.0), 1.0).unwrap();
        assert!(far.log_curvature_lower_bound().is_none());
    }
}
