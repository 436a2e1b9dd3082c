//! Base measures and their exponential tilts.
//!
//! A tilt of `π₀` by `(c, Σ_t)` is the probability measure with unnormalized
//! log-density `log π₀(x) + ⟨c,x⟩ − ½ xᵀΣ_t x`. Gaussian and mixture bases
//! have exact moments, samplers and log-partitions; generic potentials use a
//! Gaussian-envelope rejection sampler and self-normalized importance
//! sampling for moments.

mod gaussian;
mod mixture;
mod potential;
mod spec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub use gaussian::{GaussianMeasure, GaussianPosterior, MAX_REG};
pub use mixture::{GaussianMixture, MixturePosterior};
pub use potential::{BuiltinPotential, FnPotential, GenericPotential, Potential, SamplerConfig};
pub use spec::{ComponentSpec, MatrixSpec, TargetSpec};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng::{self, normal_vector, Purpose};
use potential::Envelope;

/// Quadratic regularization `Σ_t`: isotropic `t·I` or a full PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Reg {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Reg {
    pub fn as_matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Reg::Scalar(t) => DMatrix::identity(dim, dim) * *t,
            Reg::Matrix(m) => m.clone(),
        }
    }

    fn eig_range(&self) -> (f64, f64) {
        match self {
            Reg::Scalar(t) => (*t, *t),
            Reg::Matrix(m) => {
                let e = nalgebra::SymmetricEigen::new(linalg::symmetrize(m)).eigenvalues;
                (e.min(), e.max())
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Reg::Scalar(t) => {
                if !(*t >= 0.0 && t.is_finite()) {
                    return Err(Error::InvalidArgument(format!("regularization t = {t} must be >= 0")));
                }
            }
            Reg::Matrix(m) => {
                check_dim(dim, m.nrows())?;
                check_dim(dim, m.ncols())?;
                if !m.iter().all(|v| v.is_finite()) || !linalg::is_symmetric(m, linalg::SYMMETRY_TOL) {
                    return Err(Error::NotSpd("regularization matrix is not symmetric".into()));
                }
                // Anisotropic controls can leave directions unregularized, so
                // semidefinite matrices are admitted.
                let (min, max) = self.eig_range();
                if min < -1e-12 * max.abs().max(1.0) {
                    return Err(Error::NotSpd(format!(
                        "regularization matrix has eigenvalue {min:e} < 0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The base measure `π₀`.
#[derive(Debug, Clone)]
pub enum TargetMeasure {
    Gaussian(GaussianMeasure),
    Mixture(GaussianMixture),
    Potential(GenericPotential),
}

impl TargetMeasure {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Mixture(m) => m.dim(),
            Self::Potential(p) => p.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gaussian(_) => "gaussian",
            Self::Mixture(_) => "mixture",
            Self::Potential(_) => "potential",
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Self::Potential(_))
    }

    /// Normalized log-density; `None` for generic potentials.
    pub fn log_density(&self, x: &DVector<f64>) -> Option<f64> {
        match self {
            Self::Gaussian(g) => Some(g.log_density(x)),
            Self::Mixture(m) => Some(m.log_density(x)),
            Self::Potential(_) => None,
        }
    }

    /// `∇ log π₀`, exact for every variant.
    pub fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Gaussian(g) => g.grad_log_density(x),
            Self::Mixture(m) => m.grad_log_density(x),
            Self::Potential(p) => -p.gradient(x),
        }
    }

    /// Lower bound on the log-curvature `−∇² log π₀`, when one is known.
    pub fn log_curvature_lower_bound(&self) -> Option<f64> {
        match self {
            Self::Gaussian(g) => Some(1.0 / g.cov_op_norm()),
            Self::Mixture(m) => m.log_curvature_lower_bound(),
            Self::Potential(p) => (p.alpha() > 0.0).then_some(p.alpha()),
        }
    }

    /// Exact draw from the base (tilt with `c = 0`, `t = 0`).
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, cfg: &SamplerConfig) -> Result<DVector<f64>> {
        match self {
            Self::Gaussian(g) => Ok(g.sample(rng)),
            Self::Mixture(m) => Ok(m.sample(rng)),
            Self::Potential(_) => {
                let t = tilt(self, DVector::zeros(self.dim()), Reg::Scalar(0.0))?;
                t.sampler(cfg)?.draw(rng)
            }
        }
    }
}

impl From<GaussianMeasure> for TargetMeasure {
    fn from(g: GaussianMeasure) -> Self {
        Self::Gaussian(g)
    }
}

impl From<GaussianMixture> for TargetMeasure {
    fn from(m: GaussianMixture) -> Self {
        Self::Mixture(m)
    }
}

impl From<GenericPotential> for TargetMeasure {
    fn from(p: GenericPotential) -> Self {
        Self::Potential(p)
    }
}

/// `π ∝ exp(⟨c,x⟩ − ½xᵀΣ_t x) π₀(x)`.
#[derive(Debug, Clone)]
pub struct TiltedMeasure<'a> {
    base: &'a TargetMeasure,
    c: DVector<f64>,
    reg: Reg,
}

/// Build the tilted measure; validates dimensions and the regularization.
pub fn tilt(base: &TargetMeasure, c: DVector<f64>, reg: Reg) -> Result<TiltedMeasure<'_>> {
    check_dim(base.dim(), c.len())?;
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("tilt vector has non-finite entries".into()));
    }
    reg.validate(base.dim())?;
    Ok(TiltedMeasure { base, c, reg })
}

/// Controls for importance-sampled moments of generic potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBudget {
    pub samples: usize,
    pub seed: u64,
    /// Estimates with fewer effective samples are refused.
    pub min_ess: f64,
    pub sampler: SamplerConfig,
}

impl Default for MomentBudget {
    fn default() -> Self {
        Self { samples: 4096, seed: 0, min_ess: 32.0, sampler: SamplerConfig::default() }
    }
}

impl MomentBudget {
    pub fn with_samples(samples: usize) -> Self {
        Self { samples, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Largest per-coordinate standard error of `mean`; zero when exact.
    pub stderr: f64,
    /// Effective sample size of the importance weights, when sampled.
    pub ess: Option<f64>,
}

impl<'a> TiltedMeasure<'a> {
    pub fn base(&self) -> &'a TargetMeasure {
        self.base
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn reg(&self) -> &Reg {
        &self.reg
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `log π₀(x) + ⟨c,x⟩ − ½xᵀΣ_t x`, with `−V` standing in for `log π₀` on
    /// generic potentials.
    pub fn unnormalized_log_density(&self, x: &DVector<f64>) -> f64 {
        let base = match self.base {
            TargetMeasure::Potential(p) => -p.value(x),
            other => other.log_density(x).expect("exact base"),
        };
        let quad = match &self.reg {
            Reg::Scalar(t) => t * x.norm_squared(),
            Reg::Matrix(m) => x.dot(&(m * x)),
        };
        base + self.c.dot(x) - 0.5 * quad
    }

    /// Normalized log-density for Gaussian and mixture bases.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.unnormalized_log_density(x) - self.log_partition()?)
    }

    /// Posterior mean, exact for Gaussian/mixture bases.
    pub fn mean(&self, budget: &MomentBudget) -> Result<DVector<f64>> {
        let scalar = match &self.reg {
            Reg::Scalar(t) => Some(*t),
            Reg::Matrix(m) => linalg::as_scalar_identity(m),
        };
        match (self.base, scalar) {
            (TargetMeasure::Gaussian(g), Some(t)) => Ok(g.tilt_mean_scalar(&self.c, t)),
            (TargetMeasure::Mixture(m), Some(t)) => Ok(m.tilt_mean_scalar(&self.c, t)),
            _ => Ok(self.moments(budget)?.mean),
        }
    }

    pub fn moments(&self, budget: &MomentBudget) -> Result<PosteriorMoments> {
        match self.base {
            TargetMeasure::Gaussian(g) => {
                let p = g.tilt_posterior(&self.c, &self.reg)?;
                Ok(PosteriorMoments { mean: p.mean, cov: p.cov, stderr: 0.0, ess: None })
            }
            TargetMeasure::Mixture(m) => {
                let p = m.tilt_posterior(&self.c, &self.reg)?;
                let d = self.dim();
                let mut mean = DVector::zeros(d);
                let mut second = DMatrix::zeros(d, d);
                for ((mu, cov), lw) in p.means.iter().zip(&p.covs).zip(&p.log_weights) {
                    let w = lw.exp();
                    mean += mu * w;
                    second += (cov + mu * mu.transpose()) * w;
                }
                let cov = linalg::symmetrize(&(second - &mean * mean.transpose()));
                Ok(PosteriorMoments { mean, cov, stderr: 0.0, ess: None })
            }
            TargetMeasure::Potential(p) => self.importance_moments(p, budget),
        }
    }

    fn envelope(&self, p: &'a GenericPotential, cfg: &SamplerConfig) -> Result<Envelope<'a>> {
        let (lo, hi) = self.reg.eig_range();
        Envelope::new(p, &self.c, self.reg.as_matrix(self.dim()), lo.max(0.0), hi.max(0.0), cfg.mode_steps)
    }

    fn importance_moments(&self, p: &'a GenericPotential, budget: &MomentBudget) -> Result<PosteriorMoments> {
        if budget.samples == 0 {
            return Err(Error::InvalidArgument("moment budget must be positive".into()));
        }
        let env = self.envelope(p, &budget.sampler)?;
        let mut rng = rng::stream(budget.seed, 0, Purpose::Moments);
        let xs: Vec<DVector<f64>> = (0..budget.samples).map(|_| env.propose(&mut rng)).collect();
        let logw: Vec<f64> = xs.iter().map(|x| -env.gap(x)).collect();
        let lse = linalg::log_sum_exp(logw.iter().copied());
        let w: Vec<f64> = logw.iter().map(|l| (l - lse).exp()).collect();
        let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        if !(ess >= budget.min_ess) {
            return Err(Error::LowEffectiveSampleSize { ess, floor: budget.min_ess });
        }
        let d = self.dim();
        let mean = xs.iter().zip(&w).fold(DVector::zeros(d), |acc, (x, wi)| acc + x * *wi);
        let mut cov = DMatrix::zeros(d, d);
        let mut var_of_mean = DVector::zeros(d);
        for (x, wi) in xs.iter().zip(&w) {
            let r = x - &mean;
            cov += &r * r.transpose() * *wi;
            var_of_mean += r.map(|v| v * v) * (wi * wi);
        }
        let stderr = var_of_mean.iter().map(|v| v.sqrt()).fold(0.0, f64::max);
        Ok(PosteriorMoments { mean, cov: linalg::symmetrize(&cov), stderr, ess: Some(ess) })
    }

    /// `log ∫ exp(⟨c,x⟩ − ½xᵀΣ_t x) π₀(dx)` for Gaussian and mixture bases.
    pub fn log_partition(&self) -> Result<f64> {
        match self.base {
            TargetMeasure::Gaussian(g) => Ok(g.tilt_posterior(&self.c, &self.reg)?.log_z),
            TargetMeasure::Mixture(m) => Ok(m.tilt_posterior(&self.c, &self.reg)?.log_z),
            TargetMeasure::Potential(_) => Err(Error::Unsupported(
                "log-partition has no closed form for generic potentials".into(),
            )),
        }
    }

    /// Reusable exact sampler for this measure.
    pub fn sampler(&self, cfg: &SamplerConfig) -> Result<TiltSampler<'a>> {
        Ok(TiltSampler(match self.base {
            TargetMeasure::Gaussian(g) => {
                let p = g.tilt_posterior(&self.c, &self.reg)?;
                SamplerKind::Gaussian { mean: p.mean, chol: linalg::cholesky_lower(&p.cov, "posterior covariance")? }
            }
            TargetMeasure::Mixture(m) => {
                let p = m.tilt_posterior(&self.c, &self.reg)?;
                let chols = p
                    .covs
                    .iter()
                    .map(|c| linalg::cholesky_lower(c, "posterior covariance"))
                    .collect::<Result<Vec<_>>>()?;
                SamplerKind::Mixture { log_weights: p.log_weights, means: p.means, chols }
            }
            TargetMeasure::Potential(p) => {
                SamplerKind::Rejection { envelope: self.envelope(p, cfg)?, max_tries: cfg.max_tries }
            }
        }))
    }

    /// `n` exact draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, cfg: &SamplerConfig) -> Result<Vec<DVector<f64>>> {
        let s = self.sampler(cfg)?;
        (0..n).map(|_| s.draw(rng)).collect()
    }
}

/// Exact sampler for one tilted measure, reusable across draws.
pub struct TiltSampler<'a>(SamplerKind<'a>);

enum SamplerKind<'a> {
    Gaussian { mean: DVector<f64>, chol: DMatrix<f64> },
    Mixture { log_weights: Vec<f64>, means: Vec<DVector<f64>>, chols: Vec<DMatrix<f64>> },
    Rejection { envelope: Envelope<'a>, max_tries: usize },
}

impl TiltSampler<'_> {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        match &self.0 {
            SamplerKind::Gaussian { mean, chol } => Ok(mean + chol * normal_vector(rng, mean.len())),
            SamplerKind::Mixture { log_weights, means, chols } => {
                let k = mixture::pick_component(log_weights, rng);
                Ok(&means[k] + &chols[k] * normal_vector(rng, means[k].len()))
            }
            SamplerKind::Rejection { envelope, max_tries } => envelope.sample(rng, *max_tries),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn std1() -> TargetMeasure {
        GaussianMeasure::standard(1).unwrap().into()
    }

    #[test]
    fn identity_tilt_is_the_base() {
        let mix: TargetMeasure = GaussianMixture::new(vec![
            (0.4, GaussianMeasure::scalar(-1.0, 0.5).unwrap()),
            (0.6, GaussianMeasure::scalar(2.0, 1.5).unwrap()),
        ])
        .unwrap()
        .into();
        let t = tilt(&mix, DVector::zeros(1), Reg::Scalar(0.0)).unwrap();
        for i in -10..10 {
            let x = DVector::from_element(1, i as f64 * 0.4);
            let a = t.log_density(&x).unwrap();
            let b = mix.log_density(&x).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
        assert!(t.log_partition().unwrap().abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = std1();
        assert!(matches!(
            tilt(&b, DVector::zeros(2), Reg::Scalar(0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(tilt(&b, DVector::zeros(1), Reg::Scalar(-1.0)).is_err());
        let b2: TargetMeasure = GaussianMeasure::standard(2).unwrap().into();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(tilt(&b2, DVector::zeros(2), Reg::Matrix(bad)), Err(Error::NotSpd(_))));
        let semi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(tilt(&b2, DVector::zeros(2), Reg::Matrix(semi)).is_ok());
    }

    #[test]
    fn generic_log_partition_unsupported() {
        let p: TargetMeasure = GenericPotential::builtin(BuiltinPotential::Gaussian { dim: 1 }).into();
        let t = tilt(&p, DVector::zeros(1), Reg::Scalar(0.0)).unwrap();
        assert!(matches!(t.log_partition(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_budget_is_an_error() {
        let p: TargetMeasure = GenericPotential::builtin(BuiltinPotential::Gaussian { dim: 1 }).into();
        let t = tilt(&p, DVector::zeros(1), Reg::Scalar(0.0)).unwrap();
        assert!(t.moments(&MomentBudget::with_samples(0)).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let b = std1();
        let t = tilt(&b, DVector::from_element(1, 1.0), Reg::Scalar(1.0)).unwrap();
        let cfg = SamplerConfig::default();
        let a = t.sample(50, &mut stream(9, 0, Purpose::Sampler), &cfg).unwrap();
        let c = t.sample(50, &mut stream(9, 0, Purpose::Sampler), &cfg).unwrap();
        assert_eq!(a, c);
    }
}
