//! Wiener paths on explicit time grids and Euler–Maruyama integration.

mod grid;
mod time_change;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use grid::TimeGrid;
pub use time_change::{time_change_grid, Direction, TimeChangeMap};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, normal_vector, Purpose};
use crate::targets::GaussianMeasure;

/// Default clipping distance from singular endpoints.
pub const DEFAULT_EPS_CLIP: f64 = 1e-4;

/// A discretized trajectory: row `k` is the state at `grid.times()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub dim: usize,
    states: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, states: Vec<f64>, seed: u64, stream_id: u64) -> Result<Self> {
        if states.len() != grid.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "path has {} values, expected {} rows of dimension {dim}",
                states.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, dim, states, seed, stream_id })
    }

    pub fn from_states(grid: TimeGrid, states: &[DVector<f64>], seed: u64, stream_id: u64) -> Result<Self> {
        let dim = states.first().map_or(0, |s| s.len());
        let flat = states.iter().flat_map(|s| s.iter().copied()).collect();
        Self::new(grid, dim, flat, seed, stream_id)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(k))
    }

    pub fn terminal(&self) -> DVector<f64> {
        self.state(self.len() - 1)
    }

    /// States as a `(K+1) × d` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.states)
    }

    /// Σ_k ‖x_{k+1} − x_k‖², per unit dimension.
    pub fn quadratic_variation(&self) -> f64 {
        (0..self.len() - 1)
            .map(|k| {
                self.row(k + 1)
                    .iter()
                    .zip(self.row(k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.dim as f64
    }
}

/// A Wiener path together with the exact increments it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub path: SamplePath,
    increments: Vec<f64>,
}

impl WienerPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.path.grid
    }

    pub fn dim(&self) -> usize {
        self.path.dim
    }

    /// `W_{t_{k+1}} − W_{t_k}`.
    pub fn increment(&self, k: usize) -> &[f64] {
        let d = self.path.dim;
        &self.increments[k * d..(k + 1) * d]
    }

    pub fn increment_vec(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.increment(k))
    }
}

/// Standard Wiener path on `grid` starting at 0, reproducible per
/// `(seed, stream_id)`.
pub fn wiener_increments(grid: &TimeGrid, dim: usize, seed: u64, stream_id: u64) -> Result<WienerPath> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, stream_id, Purpose::Wiener);
    let steps = grid.steps();
    let mut increments = Vec::with_capacity(steps * dim);
    for k in 0..steps {
        let s = grid.dt(k).sqrt();
        increments.extend(normal_vector(&mut rng, dim).iter().map(|z| s * z));
    }
    let mut states = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    for k in 0..steps {
        for (wi, dw) in w.iter_mut().zip(&increments[k * dim..(k + 1) * dim]) {
            *wi += dw;
        }
        states.extend_from_slice(&w);
    }
    Ok(WienerPath { path: SamplePath::new(grid.clone(), dim, states, seed, stream_id)?, increments })
}

pub type DriftFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;

/// Diffusion coefficient multiplying `dW`.
pub enum Diffusion {
    Scalar(Box<dyn Fn(f64) -> f64 + Send + Sync>),
    Matrix(Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
}

#[derive(Debug, Clone)]
pub enum InitialLaw {
    Point(DVector<f64>),
    Gaussian(GaussianMeasure),
}

/// `dx = drift(x, t) dt + diffusion(t) dW`, `x₀ ∼ initial`.
pub struct DriftDiffusionSpec {
    pub drift: Box<DriftFn>,
    pub diffusion: Diffusion,
    pub initial: InitialLaw,
}

impl DriftDiffusionSpec {
    pub fn new(
        drift: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        diffusion: Diffusion,
        initial: InitialLaw,
    ) -> Self {
        Self { drift: Box::new(drift), diffusion, initial }
    }

    /// `dx = −x dt + √2 dW`.
    pub fn ornstein_uhlenbeck(x0: DVector<f64>) -> Self {
        Self::new(|x, _| -x, Diffusion::Scalar(Box::new(|_| std::f64::consts::SQRT_2)), InitialLaw::Point(x0))
    }

    pub fn dim(&self) -> usize {
        match &self.initial {
            InitialLaw::Point(x) => x.len(),
            InitialLaw::Gaussian(g) => g.dim(),
        }
    }

    /// Checks the drift is finite on `probes` and the diffusion matrix SPD.
    pub fn validate(&self, probes: &[(DVector<f64>, f64)]) -> Result<()> {
        for (x, t) in probes {
            check_dim(self.dim(), x.len())?;
            if !(self.drift)(x, *t).iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!("drift is not finite at t = {t}")));
            }
            if let Diffusion::Matrix(f) = &self.diffusion {
                crate::linalg::cholesky_lower(&f(*t), "diffusion matrix")?;
            }
        }
        Ok(())
    }
}

/// Euler–Maruyama on the noise path's grid:
/// `x_{k+1} = x_k + drift(x_k, t_k)Δt + diffusion(t_k) ΔW_k`.
pub fn euler_maruyama(spec: &DriftDiffusionSpec, noise: &WienerPath) -> Result<SamplePath> {
    let d = spec.dim();
    check_dim(d, noise.dim())?;
    let grid = noise.grid();
    let mut x = match &spec.initial {
        InitialLaw::Point(x0) => x0.clone(),
        InitialLaw::Gaussian(g) => {
            g.sample(&mut rng::stream(noise.path.seed, noise.path.stream_id, Purpose::Initial))
        }
    };
    let mut states = Vec::with_capacity(grid.len() * d);
    states.extend(x.iter().copied());
    for k in 0..grid.steps() {
        let t = grid.times()[k];
        let dt = grid.dt(k);
        let dw = noise.increment_vec(k);
        let shock = match &spec.diffusion {
            Diffusion::Scalar(s) => dw * s(t),
            Diffusion::Matrix(m) => m(t) * dw,
        };
        let drift = (spec.drift)(&x, t);
        x = (x + drift * dt) + shock;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.extend(x.iter().copied());
    }
    SamplePath::new(grid.clone(), d, states, noise.path.seed, noise.path.stream_id)
}

/// Evaluate `f(stream_id)` for `0..n` in parallel, returning results in
/// stream order. Each stream owns its randomness, so the output is the same for
/// any worker count.
pub fn run_ensemble<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Like [`run_ensemble`] but stops at the first error (by stream order).
pub fn try_run_ensemble<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    run_ensemble(n, f).into_iter().collect()
}
