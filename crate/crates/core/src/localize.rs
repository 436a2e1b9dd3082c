//! The tilt SDE, its weighted-particle (measure-valued) form, the Gaussian
//! channel construction, and the anisotropic variant with control matrices.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::log_sum_exp;
use crate::rng::{self, Purpose};
use crate::sde::{wiener_increments, SamplePath, TimeGrid, WienerPath};
use crate::targets::{tilt, MomentBudget, Reg, SamplerConfig, TargetMeasure, TiltedMeasure};

/// `(t, c_t, Σ_t, m_t)` of the localization process.
#[derive(Debug, Clone, PartialEq)]
pub struct SLState {
    pub t: f64,
    pub c: DVector<f64>,
    pub reg: Reg,
    pub mean: DVector<f64>,
}

impl SLState {
    /// The measure `π_t` this state describes.
    pub fn measure<'a>(&self, base: &'a TargetMeasure) -> Result<TiltedMeasure<'a>> {
        tilt(base, self.c.clone(), self.reg.clone())
    }

    fn initial(base: &TargetMeasure, reg: Reg, budget: &MomentBudget) -> Result<Self> {
        let c = DVector::zeros(base.dim());
        let mean = tilt(base, c.clone(), reg.clone())?.mean(budget)?;
        Ok(Self { t: 0.0, c, reg, mean })
    }
}

fn check_noise(base: &TargetMeasure, grid: &TimeGrid, noise: &WienerPath) -> Result<()> {
    check_dim(base.dim(), noise.dim())?;
    if noise.grid() != grid {
        return Err(Error::InvalidGrid("noise path lives on a different grid".into()));
    }
    if grid.start() != 0.0 {
        return Err(Error::InvalidGrid("localization runs start at t = 0".into()));
    }
    Ok(())
}

/// Euler–Maruyama for `dc_t = m_t dt + dW_t`, `c₀ = 0`, `Σ_t = t·I`, with
/// `m_t` the mean of `tilt(base, c_t, t)`.
///
/// The regularization is accumulated as `Σ Δt` so that the isotropic run and
/// [`anisotropic_step`] with `C = I` perform identical arithmetic.
pub fn tilt_sde_run(
    base: &TargetMeasure,
    grid: &TimeGrid,
    noise: &WienerPath,
    budget: &MomentBudget,
) -> Result<Vec<SLState>> {
    check_noise(base, grid, noise)?;
    let mut state = SLState::initial(base, Reg::Scalar(0.0), budget)?;
    let mut acc_t = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    out.push(state.clone());
    for k in 0..grid.steps() {
        let dt = grid.dt(k);
        let c = (&state.c + &state.mean * dt) + noise.increment_vec(k);
        acc_t += dt;
        let reg = Reg::Scalar(acc_t);
        let mean = tilt(base, c.clone(), reg.clone())?.mean(budget)?;
        if !c.iter().chain(mean.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        state = SLState { t: grid.times()[k + 1], c, reg, mean };
        out.push(state.clone());
    }
    Ok(out)
}

/// Terminal `c_T` of a tilt-SDE run without keeping the trajectory.
pub fn tilt_sde_terminal(
    base: &TargetMeasure,
    grid: &TimeGrid,
    noise: &WienerPath,
    budget: &MomentBudget,
) -> Result<DVector<f64>> {
    check_noise(base, grid, noise)?;
    let d = base.dim();
    let mut c = DVector::zeros(d);
    let mut acc_t = 0.0;
    let mut mean = tilt(base, c.clone(), Reg::Scalar(0.0))?.mean(budget)?;
    for k in 0..grid.steps() {
        let dt = grid.dt(k);
        c = (&c + &mean * dt) + noise.increment_vec(k);
        acc_t += dt;
        mean = tilt(base, c.clone(), Reg::Scalar(acc_t))?.mean(budget)?;
    }
    Ok(c)
}

/// States of a tilt-SDE run at selected grid indices.
pub fn tilt_sde_at(
    base: &TargetMeasure,
    grid: &TimeGrid,
    noise: &WienerPath,
    budget: &MomentBudget,
    indices: &[usize],
) -> Result<Vec<DVector<f64>>> {
    let states = tilt_sde_run(base, grid, noise, budget)?;
    Ok(indices.iter().map(|&k| states[k].c.clone()).collect())
}

/// One Euler step of the anisotropic process
/// `dc = C Cᵀ m dt + C dW`, `dΣ = C Cᵀ dt`. `state.reg` must be a matrix.
pub fn anisotropic_step(
    base: &TargetMeasure,
    state: &SLState,
    control: &DMatrix<f64>,
    dt: f64,
    dw: &DVector<f64>,
    budget: &MomentBudget,
) -> Result<SLState> {
    let d = base.dim();
    let Reg::Matrix(sigma) = &state.reg else {
        return Err(Error::InvalidArgument("anisotropic steps need a matrix regularization".into()));
    };
    check_dim(d, control.nrows())?;
    check_dim(d, control.ncols())?;
    check_dim(d, dw.len())?;
    check_dim(d, state.c.len())?;
    let gain = control * control.transpose();
    let c = (&state.c + (&gain * &state.mean) * dt) + control * dw;
    let sigma = sigma + &gain * dt;
    let reg = Reg::Matrix(sigma);
    let mean = tilt(base, c.clone(), reg.clone())?.mean(budget)?;
    Ok(SLState { t: state.t + dt, c, reg, mean })
}

/// Run [`anisotropic_step`] along a noise path with a control schedule
/// `control(k, t)`, starting from `c = 0`, `Σ = 0`.
pub fn anisotropic_run(
    base: &TargetMeasure,
    grid: &TimeGrid,
    noise: &WienerPath,
    budget: &MomentBudget,
    control: impl Fn(usize, f64) -> DMatrix<f64>,
) -> Result<Vec<SLState>> {
    check_noise(base, grid, noise)?;
    let d = base.dim();
    let mut state = SLState::initial(base, Reg::Matrix(DMatrix::zeros(d, d)), budget)?;
    let mut out = Vec::with_capacity(grid.len());
    out.push(state.clone());
    for k in 0..grid.steps() {
        let next = anisotropic_step(base, &state, &control(k, state.t), grid.dt(k), &noise.increment_vec(k), budget)?;
        state = SLState { t: grid.times()[k + 1], ..next };
        out.push(state.clone());
    }
    Ok(out)
}

/// Gaussian channel: `x ∼ π₀` once, then `c_t = t·x + B_t` on the grid.
pub fn channel_path(
    base: &TargetMeasure,
    grid: &TimeGrid,
    seed: u64,
    stream_id: u64,
    sampler: &SamplerConfig,
) -> Result<(DVector<f64>, SamplePath)> {
    let x = base.sample_one(&mut rng::stream(seed, stream_id, Purpose::Signal), sampler)?;
    let b = wiener_increments(grid, base.dim(), seed, stream_id)?;
    let states: Vec<DVector<f64>> =
        grid.times().iter().enumerate().map(|(k, &t)| &x * t + b.path.state(k)).collect();
    Ok((x.clone(), SamplePath::from_states(grid.clone(), &states, seed, stream_id)?))
}

/// Posterior of the channel input given `c_t` at time `t`.
pub fn channel_posterior(base: &TargetMeasure, c: DVector<f64>, t: f64) -> Result<TiltedMeasure<'_>> {
    tilt(base, c, Reg::Scalar(t))
}

/// Weighted-particle approximation of `π_t` at one time.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub t: f64,
    pub points: Arc<Vec<DVector<f64>>>,
    pub log_weights: Vec<f64>,
    /// Accumulated log of the pre-normalization mass.
    pub log_mass: f64,
}

impl ParticleCloud {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn weighted_mean(&self) -> DVector<f64> {
        weighted_mean(&self.points, &self.log_weights)
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.log_weights.iter().map(|l| (2.0 * l).exp()).sum::<f64>()
    }

    /// Weighted probability of `{x : pred(x)}`.
    pub fn probability(&self, pred: impl Fn(&DVector<f64>) -> bool) -> f64 {
        self.points
            .iter()
            .zip(&self.log_weights)
            .filter(|(x, _)| pred(x))
            .map(|(_, l)| l.exp())
            .sum()
    }
}

fn weighted_mean(points: &[DVector<f64>], log_weights: &[f64]) -> DVector<f64> {
    points
        .iter()
        .zip(log_weights)
        .fold(DVector::zeros(points[0].len()), |acc, (x, l)| acc + x * l.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleConfig {
    pub n_particles: usize,
    /// Runs abort when the effective sample size drops below this fraction of
    /// `n_particles`.
    pub min_ess_fraction: f64,
}

impl ParticleConfig {
    pub fn new(n_particles: usize) -> Self {
        Self { n_particles, min_ess_fraction: 0.01 }
    }
}

/// Particle system for `dπ_t(x) = ⟨x − m_t, dW_t⟩ π_t(x)` using the
/// log-space Itô-exponential weight update.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    cloud: ParticleCloud,
    min_ess: f64,
}

impl ParticleSystem {
    /// Particles drawn exactly from the base with uniform weights.
    pub fn new(base: &TargetMeasure, cfg: &ParticleConfig, seed: u64, stream_id: u64) -> Result<Self> {
        if cfg.n_particles < 2 {
            return Err(Error::InvalidArgument("need at least two particles".into()));
        }
        let mut rng = rng::stream(seed, stream_id, Purpose::Initial);
        let sampler = SamplerConfig::default();
        let points = (0..cfg.n_particles)
            .map(|_| base.sample_one(&mut rng, &sampler))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_points(points, cfg.min_ess_fraction))
    }

    pub fn from_points(points: Vec<DVector<f64>>, min_ess_fraction: f64) -> Self {
        let n = points.len();
        let lw = -(n as f64).ln();
        Self {
            min_ess: min_ess_fraction * n as f64,
            cloud: ParticleCloud { t: 0.0, points: Arc::new(points), log_weights: vec![lw; n], log_mass: 0.0 },
        }
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn step(&mut self, dt: f64, dw: &[f64]) -> Result<()> {
        let m = self.cloud.weighted_mean();
        let cloud = &mut self.cloud;
        for (x, lw) in cloud.points.iter().zip(cloud.log_weights.iter_mut()) {
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((xi, mi), dwi) in x.iter().zip(m.iter()).zip(dw) {
                let r = xi - mi;
                lin += r * dwi;
                sq += r * r;
            }
            *lw += lin - 0.5 * sq * dt;
        }
        let lse = log_sum_exp(cloud.log_weights.iter().copied());
        for lw in cloud.log_weights.iter_mut() {
            *lw -= lse;
        }
        cloud.log_mass += lse;
        cloud.t += dt;
        let ess = cloud.ess();
        if !(ess >= self.min_ess) {
            return Err(Error::LowEffectiveSampleSize { ess, floor: self.min_ess });
        }
        Ok(())
    }
}

/// Evolve a weighted particle cloud along `noise`, returning the cloud at every
/// grid time.
pub fn particle_sl_run(
    base: &TargetMeasure,
    cfg: &ParticleConfig,
    grid: &TimeGrid,
    noise: &WienerPath,
    init_seed: u64,
) -> Result<Vec<ParticleCloud>> {
    check_noise(base, grid, noise)?;
    let mut sys = ParticleSystem::new(base, cfg, init_seed, noise.path.stream_id)?;
    let mut out = Vec::with_capacity(grid.len());
    out.push(sys.cloud().clone());
    for k in 0..grid.steps() {
        sys.step(grid.dt(k), noise.increment(k))?;
        sys.cloud.t = grid.times()[k + 1];
        out.push(sys.cloud().clone());
    }
    Ok(out)
}
