//! Forward OU noising, Tweedie scores from known targets, and the
//! time-changed backward SDE whose rescaling is the tilt process.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Purpose};
use crate::sde::{TimeGrid, WienerPath};
use crate::targets::{tilt, GaussianMeasure, MomentBudget, Reg, TargetMeasure};

/// `y = s·x + N(0, σ²I)` with `x ∼ π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyChannelSpec {
    pub scale: f64,
    pub noise_var: f64,
}

impl NoisyChannelSpec {
    pub fn new(scale: f64, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("channel needs σ² > 0, got {noise_var}")));
        }
        Ok(Self { scale, noise_var })
    }

    /// The OU marginal at time `t > 0`.
    pub fn ou(t: f64) -> Result<Self> {
        let (s, v) = ou_marginal_params(t)?;
        Self::new(s, v)
    }

    /// The OU marginal seen by the backward process at time `u > 0`:
    /// `s² = u/(u+1)`, `σ² = 1/(u+1)`.
    pub fn at_backward_time(u: f64) -> Result<Self> {
        if !(u > 0.0) {
            return Err(Error::InvalidArgument(format!("backward time must be positive, got {u}")));
        }
        Self::new((u / (u + 1.0)).sqrt(), 1.0 / (u + 1.0))
    }

    /// Tilt `(c, t)` whose posterior is the law of `x` given `y`.
    pub fn posterior_tilt(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        (y * (self.scale / self.noise_var), self.scale * self.scale / self.noise_var)
    }

    /// Exact log-density of `y` for Gaussian and mixture bases.
    pub fn log_marginal(&self, base: &TargetMeasure, y: &DVector<f64>) -> Result<f64> {
        let push = |g: &GaussianMeasure| -> Result<GaussianMeasure> {
            let d = g.dim();
            let cov = g.cov() * (self.scale * self.scale)
                + nalgebra::DMatrix::identity(d, d) * self.noise_var;
            GaussianMeasure::new(g.mean() * self.scale, cov)
        };
        match base {
            TargetMeasure::Gaussian(g) => Ok(push(g)?.log_density(y)),
            TargetMeasure::Mixture(m) => {
                let parts = m
                    .components()
                    .iter()
                    .zip(m.weights())
                    .map(|(g, w)| Ok(w.ln() + push(g)?.log_density(y)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(crate::linalg::log_sum_exp(parts))
            }
            TargetMeasure::Potential(_) => {
                Err(Error::Unsupported("noisy marginal of a generic potential".into()))
            }
        }
    }
}

/// `(s, σ²) = (e^{−t}, 1 − e^{−2t})`.
pub fn ou_marginal_params(t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("OU time must be nonnegative, got {t}")));
    }
    Ok(((-t).exp(), -(-2.0 * t).exp_m1()))
}

/// `∇ log ν(y) = (s·E[x | y] − y)/σ²`.
pub fn tweedie_score(
    base: &TargetMeasure,
    spec: &NoisyChannelSpec,
    y: &DVector<f64>,
    budget: &MomentBudget,
) -> Result<DVector<f64>> {
    check_dim(base.dim(), y.len())?;
    let (c, t) = spec.posterior_tilt(y);
    let m = tilt(base, c, Reg::Scalar(t))?.mean(budget)?;
    Ok((m * spec.scale - y) / spec.noise_var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    pub u: f64,
    pub x: DVector<f64>,
}

/// `(t, c) = (u, √(u(u+1))·x)`.
pub fn rescale_to_tilt(state: &BackwardState) -> (f64, DVector<f64>) {
    let u = state.u;
    (u, &state.x * (u * (u + 1.0)).sqrt())
}

/// Drift of the backward SDE at `(x, u)`.
pub fn backward_drift(base: &TargetMeasure, x: &DVector<f64>, u: f64, budget: &MomentBudget) -> Result<DVector<f64>> {
    let spec = NoisyChannelSpec::at_backward_time(u)?;
    let score = tweedie_score(base, &spec, x, budget)?;
    let k = u * (u + 1.0);
    Ok(x / (2.0 * k) + score / k)
}

/// Euler–Maruyama for
/// `dx = [x/(2u(u+1)) + ∇log π_u(x)/(u(u+1))] du + dW/√(u(u+1))`
/// started from `N(0, I)` at the first grid point.
pub fn backward_sde_run(
    base: &TargetMeasure,
    u_grid: &TimeGrid,
    noise: &WienerPath,
    budget: &MomentBudget,
) -> Result<Vec<BackwardState>> {
    let d = base.dim();
    check_dim(d, noise.dim())?;
    if noise.grid() != u_grid {
        return Err(Error::InvalidGrid("noise path lives on a different grid".into()));
    }
    if !(u_grid.start() > 0.0) {
        return Err(Error::InvalidGrid("backward grids must start at u > 0".into()));
    }
    let mut x = rng::normal_vector(&mut rng::stream(noise.path.seed, noise.path.stream_id, Purpose::Initial), d);
    let mut out = Vec::with_capacity(u_grid.len());
    out.push(BackwardState { u: u_grid.start(), x: x.clone() });
    for k in 0..u_grid.steps() {
        let u = u_grid.times()[k];
        let du = u_grid.dt(k);
        let drift = backward_drift(base, &x, u, budget)?;
        x = (x + drift * du) + noise.increment_vec(k) / (u * (u + 1.0)).sqrt();
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        out.push(BackwardState { u: u_grid.times()[k + 1], x: x.clone() });
    }
    Ok(out)
}

/// Geometric backward grid on `[eps_clip, u_max]`.
pub fn backward_grid(eps_clip: f64, u_max: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::geometric(eps_clip, u_max, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::quad::integrate;
    use crate::targets::GaussianMixture;

    #[test]
    fn ou_params() {
        assert_eq!(ou_marginal_params(0.0).unwrap(), (1.0, 0.0));
        let (s, v) = ou_marginal_params(2f64.ln()).unwrap();
        assert!((s - 0.5).abs() < 1e-15 && (v - 0.75).abs() < 1e-15);
        let (s, v) = ou_marginal_params(50.0).unwrap();
        assert!(s < 1e-20 && (v - 1.0).abs() < 1e-15);
        assert!(ou_marginal_params(-1.0).is_err());
    }

    #[test]
    fn backward_time_matches_ou_time_change() {
        for u in [0.01, 0.5, 1.0, 7.0] {
            let t = 0.5 * ((u + 1.0) / u as f64).ln();
            let a = NoisyChannelSpec::ou(t).unwrap();
            let b = NoisyChannelSpec::at_backward_time(u).unwrap();
            assert!((a.scale - b.scale).abs() < 1e-12);
            assert!((a.noise_var - b.noise_var).abs() < 1e-12);
            assert!((b.posterior_tilt(&DVector::zeros(1)).1 - u).abs() < 1e-12 * u.max(1.0));
        }
    }

    fn fd_score_quadrature(base: &TargetMeasure, spec: &NoisyChannelSpec, y: f64) -> f64 {
        // log ν(y) = log ∫ π(x) φ_σ(y − s x) dx by Simpson quadrature
        let log_nu = |y: f64| {
            let f = |x: f64| {
                let lp = base.log_density(&DVector::from_element(1, x)).unwrap();
                let r = y - spec.scale * x;
                (lp - r * r / (2.0 * spec.noise_var)).exp()
            };
            integrate(f, -15.0, 15.0, 6001).ln()
        };
        let h = 1e-4;
        (log_nu(y + h) - log_nu(y - h)) / (2.0 * h)
    }

    #[test]
    fn score_of_standard_normal_channel() {
        let base: TargetMeasure = GaussianMeasure::scalar(0.0, 1.0).unwrap().into();
        let spec = NoisyChannelSpec::new(1.0, 1.0).unwrap();
        let y = DVector::from_element(1, 2.0);
        let s = tweedie_score(&base, &spec, &y, &MomentBudget::default()).unwrap()[0];
        assert!((s + 1.0).abs() < 1e-12);
        let fd = fd_score_quadrature(&base, &spec, 2.0);
        assert!((fd + 1.0).abs() < 1e-6, "{fd}");
    }

    #[test]
    fn score_vanishes_at_marginal_mean_and_symmetric_point() {
        let base: TargetMeasure = GaussianMeasure::scalar(1.5, 2.0).unwrap().into();
        let spec = NoisyChannelSpec::new(0.6, 0.64).unwrap();
        let s = tweedie_score(&base, &spec, &DVector::from_element(1, 0.9), &MomentBudget::default()).unwrap();
        assert!(s[0].abs() < 1e-12);
        let mix: TargetMeasure = GaussianMixture::symmetric_pair(DVector::from_element(1, 3.0), 1.0).unwrap().into();
        let s = tweedie_score(&mix, &NoisyChannelSpec::new(1.0, 1.0).unwrap(), &DVector::zeros(1), &MomentBudget::default())
            .unwrap();
        assert!(s[0].abs() < 1e-12);
    }

    #[test]
    fn score_matches_quadrature_on_mixture() {
        let mix: TargetMeasure = GaussianMixture::new(vec![
            (0.3, GaussianMeasure::scalar(-2.0, 0.5).unwrap()),
            (0.7, GaussianMeasure::scalar(1.0, 1.5).unwrap()),
        ])
        .unwrap()
        .into();
        for (s, v, y) in [(0.8, 0.36, 0.4), (0.3, 0.91, -1.2), (1.0, 0.2, 2.5)] {
            let spec = NoisyChannelSpec::new(s, v).unwrap();
            let got = tweedie_score(&mix, &spec, &DVector::from_element(1, y), &MomentBudget::default()).unwrap()[0];
            let fd = fd_score_quadrature(&mix, &spec, y);
            assert!((got - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{got} vs {fd}");
        }
    }

    #[test]
    fn rescale_arithmetic() {
        let (t, c) = rescale_to_tilt(&BackwardState { u: 1.0, x: DVector::from_vec(vec![1.0, 0.0]) });
        assert_eq!(t, 1.0);
        assert!((c[0] - 2f64.sqrt()).abs() < 1e-15 && c[1] == 0.0);
        let (_, c) = rescale_to_tilt(&BackwardState { u: 1e-12, x: DVector::from_element(1, 3.0) });
        assert!(c[0].abs() < 1e-5);
    }

    #[test]
    fn run_starts_from_standard_normal_draw() {
        let base: TargetMeasure = GaussianMeasure::scalar(2.0, 1.0).unwrap().into();
        let grid = backward_grid(1e-3, 100.0, 50).unwrap();
        let w = crate::sde::wiener_increments(&grid, 1, 3, 9).unwrap();
        let run = backward_sde_run(&base, &grid, &w, &MomentBudget::default()).unwrap();
        let x0 = rng::normal_vector(&mut rng::stream(3, 9, Purpose::Initial), 1);
        assert_eq!(run[0].x, x0);
        assert_eq!(run[0].u, 1e-3);
        assert_eq!(run.len(), 51);
        assert!(backward_sde_run(&base, &TimeGrid::uniform(0.0, 1.0, 5).unwrap(), &w, &MomentBudget::default()).is_err());
    }
}
