//! Renormalized potentials `V_τ`, fluctuation measures, the Polchinski SDE,
//! and the log-Sobolev constant schedules for strongly log-concave targets.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::log_sum_exp;
use crate::rng::{self, Purpose};
use crate::sde::{SamplePath, TimeGrid, WienerPath};
use crate::targets::{tilt, GaussianMeasure, MomentBudget, Reg, TargetMeasure, TiltedMeasure};

fn check_tau(tau: f64, allow_one: bool) -> Result<()> {
    let ok = if allow_one { (0.0..=1.0).contains(&tau) } else { (0.0..1.0).contains(&tau) };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("τ = {tau} is outside the flow interval")))
    }
}

/// `π_τ^v = tilt(π, v/(1−τ), τ/(1−τ))`.
pub fn fluctuation_measure<'a>(base: &'a TargetMeasure, tau: f64, v: &DVector<f64>) -> Result<TiltedMeasure<'a>> {
    check_tau(tau, false)?;
    let s = 1.0 - tau;
    tilt(base, v / s, Reg::Scalar(tau / s))
}

/// `V_τ(x) = −log E_{z∼N(0,(1−τ)I)} exp(−V₁(x+z))` with `V₁ = −log π − ½‖x‖²`.
///
/// For Gaussian and mixture bases `π` is the normalized density, so the
/// additive constant is the same at every `τ`. Generic potentials use `π ∝
/// exp(−V)` without normalization and a Monte Carlo convolution.
#[derive(Debug, Clone)]
pub struct RenormPotential<'a> {
    base: &'a TargetMeasure,
    tau: f64,
    budget: MomentBudget,
}

impl<'a> RenormPotential<'a> {
    /// `τ = 1` is accepted and evaluates `V₁` directly.
    pub fn new(base: &'a TargetMeasure, tau: f64, budget: MomentBudget) -> Result<Self> {
        check_tau(tau, true)?;
        Ok(Self { base, tau, budget })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn v1(&self, y: &DVector<f64>) -> f64 {
        let log_pi = match self.base {
            TargetMeasure::Potential(p) => -p.value(y),
            other => other.log_density(y).expect("exact base"),
        };
        -log_pi - 0.5 * y.norm_squared()
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.base.dim(), x.len())?;
        if self.tau == 1.0 {
            return Ok(self.v1(x));
        }
        let s = 1.0 - self.tau;
        match self.base {
            TargetMeasure::Potential(_) => {
                let n = self.budget.samples;
                if n == 0 {
                    return Err(Error::InvalidArgument("moment budget must be positive".into()));
                }
                let mut r = rng::stream(self.budget.seed, 0, Purpose::Aux);
                let sd = s.sqrt();
                let terms = (0..n).map(|_| -self.v1(&(x + rng::normal_vector(&mut r, x.len()) * sd)));
                Ok(-(log_sum_exp(terms.collect::<Vec<_>>()) - (n as f64).ln()))
            }
            _ => {
                let d = x.len() as f64;
                let log_z = fluctuation_measure(self.base, self.tau, x)?.log_partition()?;
                Ok(0.5 * d * (2.0 * PI * s).ln() + x.norm_squared() / (2.0 * s) - log_z)
            }
        }
    }

    /// `∇V_τ(x) = (x − m_τ)/(1−τ)` with `m_τ` the fluctuation-measure mean.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.base.dim(), x.len())?;
        if self.tau == 1.0 {
            return Ok(-self.base.grad_log_density(x) - x);
        }
        let m = fluctuation_measure(self.base, self.tau, x)?.mean(&self.budget)?;
        Ok((x - m) / (1.0 - self.tau))
    }
}

/// `(V_τ(x), ∇V_τ(x))`.
pub fn renorm_potential(
    base: &TargetMeasure,
    tau: f64,
    x: &DVector<f64>,
    budget: &MomentBudget,
) -> Result<(f64, DVector<f64>)> {
    let v = RenormPotential::new(base, tau, *budget)?;
    Ok((v.value(x)?, v.gradient(x)?))
}

/// Euler–Maruyama for `dv = −(v − m_τ)/(1−τ) dτ + dW`, `v₀ = 0`.
pub fn polchinski_run(
    base: &TargetMeasure,
    tau_grid: &TimeGrid,
    noise: &WienerPath,
    budget: &MomentBudget,
) -> Result<SamplePath> {
    let d = base.dim();
    check_dim(d, noise.dim())?;
    if noise.grid() != tau_grid {
        return Err(Error::InvalidGrid("noise path lives on a different grid".into()));
    }
    if tau_grid.start() != 0.0 || !(tau_grid.end() < 1.0) {
        return Err(Error::InvalidGrid("Polchinski grids run from τ = 0 to below 1".into()));
    }
    let mut v = DVector::zeros(d);
    let mut states = Vec::with_capacity(tau_grid.len());
    states.push(v.clone());
    for k in 0..tau_grid.steps() {
        let tau = tau_grid.times()[k];
        let m = fluctuation_measure(base, tau, &v)?.mean(budget)?;
        let drift = -(&v - m) / (1.0 - tau);
        v = (v + drift * tau_grid.dt(k)) + noise.increment_vec(k);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.push(v.clone());
    }
    SamplePath::from_states(tau_grid.clone(), &states, noise.path.seed, noise.path.stream_id)
}

/// Finite-difference residual of `∂_τV + ½ΔV − ½‖∇V‖²` at `(τ, x)`,
/// returned with the magnitude of the largest term for relative comparison.
pub fn polchinski_residual(
    base: &TargetMeasure,
    tau: f64,
    x: &DVector<f64>,
    h: f64,
    budget: &MomentBudget,
) -> Result<(f64, f64)> {
    check_tau(tau - h, false)?;
    check_tau(tau + h, false)?;
    let at = |t: f64, y: &DVector<f64>| RenormPotential::new(base, t, *budget)?.value(y);
    let dtau = (at(tau + h, x)? - at(tau - h, x)?) / (2.0 * h);
    let v0 = at(tau, x)?;
    let mut lap = 0.0;
    let mut grad_sq = 0.0;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let (vp, vm) = (at(tau, &xp)?, at(tau, &xm)?);
        lap += (vp - 2.0 * v0 + vm) / (h * h);
        grad_sq += ((vp - vm) / (2.0 * h)).powi(2);
    }
    let residual = dtau + 0.5 * lap - 0.5 * grad_sq;
    let scale = dtau.abs().max(0.5 * lap.abs()).max(0.5 * grad_sq);
    Ok((residual, scale))
}

/// Curvature schedule of `V_τ` for an `α`-strongly log-concave target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LsiSchedule {
    pub alpha: f64,
}

/// One row of a tabulated schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub tau: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub gamma: f64,
    pub factor: f64,
}

pub fn lsi_schedule(alpha: f64) -> Result<LsiSchedule> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("α must be positive, got {alpha}")));
    }
    Ok(LsiSchedule { alpha })
}

impl LsiSchedule {
    /// Lower bound on `∇²V_τ`: `(α−1)/((1−τ)α + τ)`.
    pub fn lambda(&self, tau: f64) -> f64 {
        let a = self.alpha;
        (a - 1.0) / ((1.0 - tau) * a + tau)
    }

    /// `Λ_τ = ∫_τ¹ λ = log((1−α)τ + α)`.
    pub fn big_lambda(&self, tau: f64) -> f64 {
        let a = self.alpha;
        ((1.0 - a) * tau + a).ln()
    }

    /// `1/γ_τ = τ((1−α)τ + α)/α`.
    pub fn inv_gamma(&self, tau: f64) -> f64 {
        let a = self.alpha;
        tau * ((1.0 - a) * tau + a) / a
    }

    /// Infinite at `τ = 0`.
    pub fn gamma(&self, tau: f64) -> f64 {
        let a = self.alpha;
        a / (tau * ((1.0 - a) * tau + a))
    }

    pub fn row(&self, tau: f64) -> Result<ScheduleRow> {
        Ok(ScheduleRow {
            tau,
            lambda: self.lambda(tau),
            big_lambda: self.big_lambda(tau),
            gamma: self.gamma(tau),
            factor: stability_factor(self.alpha, tau)?,
        })
    }

    pub fn table(&self, taus: &[f64]) -> Result<Vec<ScheduleRow>> {
        taus.iter().map(|&t| self.row(t)).collect()
    }
}

/// `α/(α + τ/(1−τ)) = α(1−τ)/(α(1−τ) + τ)`; zero at `τ = 1`.
pub fn stability_factor(alpha: f64, tau: f64) -> Result<f64> {
    check_tau(tau, true)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("α must be positive, got {alpha}")));
    }
    Ok(alpha * (1.0 - tau) / (alpha * (1.0 - tau) + tau))
}

/// `E_{ν_τ}[Var_{π_τ^v}⟨θ,x⟩] / Var_π⟨θ,x⟩` for a Gaussian target. The
/// fluctuation covariance does not depend on `v`, so this is exact.
pub fn gaussian_variance_ratio(target: &GaussianMeasure, theta: &DVector<f64>, tau: f64) -> Result<f64> {
    check_dim(target.dim(), theta.len())?;
    check_tau(tau, false)?;
    let post = target.tilt_posterior(&DVector::zeros(theta.len()), &Reg::Scalar(tau / (1.0 - tau)))?;
    Ok(theta.dot(&(&post.cov * theta)) / theta.dot(&(target.cov() * theta)))
}
