//! Restricted Gaussian dynamics (the proximal sampler): transitions, exact
//! Gaussian law propagation, entropic-stability probes and KL contraction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::diagnostics::{gaussian_kl, quad::simpson_rule};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, log_sum_exp};
use crate::rng::{self, Purpose};
use crate::sde::run_ensemble;
use crate::targets::{tilt, GaussianMeasure, GenericPotential, Reg, SamplerConfig, TargetMeasure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSampler {
    /// Closed-form draws; Gaussian and mixture targets.
    Exact,
    /// Rejection from a Gaussian envelope; strongly log-concave potentials.
    Rejection { max_tries: usize },
}

#[derive(Debug, Clone)]
pub struct RgdConfig {
    pub target: TargetMeasure,
    pub eta: f64,
    pub inner: InnerSampler,
    pub steps: usize,
}

impl RgdConfig {
    /// Picks the exact sampler when available, rejection otherwise.
    pub fn new(target: TargetMeasure, eta: f64, steps: usize) -> Result<Self> {
        let inner = if target.is_exact() {
            InnerSampler::Exact
        } else {
            InnerSampler::Rejection { max_tries: SamplerConfig::default().max_tries }
        };
        let cfg = Self { target, eta, inner, steps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size η must be positive, got {}", self.eta)));
        }
        match (&self.inner, &self.target) {
            (InnerSampler::Exact, t) if !t.is_exact() => {
                Err(Error::Unsupported("exact inner sampling needs a Gaussian or mixture target".into()))
            }
            (InnerSampler::Rejection { .. }, TargetMeasure::Potential(p)) if p.beta().is_none() => {
                Err(Error::Unsupported("rejection inner sampling needs a smoothness bound".into()))
            }
            _ => Ok(()),
        }
    }

    fn sampler_config(&self) -> SamplerConfig {
        match self.inner {
            InnerSampler::Exact => SamplerConfig::default(),
            InnerSampler::Rejection { max_tries } => SamplerConfig { max_tries, ..SamplerConfig::default() },
        }
    }
}

fn restricted_draw<R: Rng + ?Sized>(cfg: &RgdConfig, c: DVector<f64>, t: f64, rng: &mut R) -> Result<DVector<f64>> {
    tilt(&cfg.target, c, Reg::Scalar(t))?.sampler(&cfg.sampler_config())?.draw(rng)
}

/// `y ∼ N(x, ηI)`, then `x′ ∼ tilt(π, y/η, 1/η)`.
pub fn rgd_step<R: Rng + ?Sized>(x: &DVector<f64>, cfg: &RgdConfig, rng: &mut R) -> Result<DVector<f64>> {
    check_dim(cfg.target.dim(), x.len())?;
    let y = x + rng::normal_vector(rng, x.len()) * cfg.eta.sqrt();
    restricted_draw(cfg, y / cfg.eta, 1.0 / cfg.eta, rng)
}

/// The same transition read as one localization step at `T = 1/η`:
/// `c ∼ N(Tx, TI)`, then `x′ ∼ tilt(π, c, T)`.
pub fn rgd_step_localization<R: Rng + ?Sized>(x: &DVector<f64>, cfg: &RgdConfig, rng: &mut R) -> Result<DVector<f64>> {
    check_dim(cfg.target.dim(), x.len())?;
    let t = 1.0 / cfg.eta;
    let c = x * t + rng::normal_vector(rng, x.len()) * t.sqrt();
    restricted_draw(cfg, c, t, rng)
}

/// `cfg.steps` transitions from `x0`, including the start.
pub fn rgd_chain(x0: &DVector<f64>, cfg: &RgdConfig, seed: u64, stream_id: u64) -> Result<Vec<DVector<f64>>> {
    let mut rng = rng::stream(seed, stream_id, Purpose::Sampler);
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(x0.clone());
    for _ in 0..cfg.steps {
        let next = rgd_step(out.last().expect("non-empty"), cfg, &mut rng)?;
        out.push(next);
    }
    Ok(out)
}

/// Law of the chain after `iteration` steps and its KL to the target.
#[derive(Debug, Clone, Serialize)]
pub struct ChainLaw {
    pub iteration: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub kl: f64,
}

impl ChainLaw {
    pub fn measure(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::new(DVector::from_vec(self.mean.clone()), linalg::matrix_from_rows(&self.cov)?)
    }

    /// `KL_{k+1} / KL_k` along a propagated sequence.
    pub fn ratios(laws: &[ChainLaw]) -> Vec<f64> {
        laws.windows(2).map(|w| w[1].kl / w[0].kl).collect()
    }
}

fn kl_to(law: &GaussianMeasure, target: &GaussianMeasure) -> Result<f64> {
    gaussian_kl(law.mean(), law.cov(), target.mean(), target.cov())
}

/// One exact step: `Cov ← Cov + ηI`, then the Gaussian-posterior map
/// `Σ' = (P + I/η)⁻¹`, `m' = Σ'(Pμ + m/η)`, `C' = Σ' + Σ'CΣ'/η²`.
pub fn chain_law_step(law: &GaussianMeasure, target: &GaussianMeasure, eta: f64) -> Result<GaussianMeasure> {
    check_dim(target.dim(), law.dim())?;
    let d = law.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let cov_y = law.cov() + &eye * eta;
    let (post, _) = linalg::spd_inverse_logdet(&(target.precision() + &eye / eta), "restricted posterior precision")?;
    let mean = &post * (target.precision() * target.mean() + law.mean() / eta);
    let cov = &post + &post * cov_y * &post / (eta * eta);
    GaussianMeasure::new(mean, linalg::symmetrize(&cov))
}

/// Exact laws of `k` chain steps from a Gaussian start, with KL to the target.
pub fn chain_law_propagate(init: &GaussianMeasure, target: &GaussianMeasure, eta: f64, k: usize) -> Result<Vec<ChainLaw>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size η must be positive, got {eta}")));
    }
    let mut law = init.clone();
    let mut out = Vec::with_capacity(k + 1);
    for iteration in 0..=k {
        if iteration > 0 {
            law = chain_law_step(&law, target, eta)?;
        }
        out.push(ChainLaw {
            iteration,
            mean: law.mean().iter().copied().collect(),
            cov: linalg::matrix_to_rows(law.cov()),
            kl: kl_to(&law, target)?,
        });
    }
    Ok(out)
}

/// `α/(α + 1/η)`.
pub fn lsi_lower_bound(alpha: f64, eta: f64) -> Result<f64> {
    if !(alpha > 0.0 && eta > 0.0) {
        return Err(Error::InvalidArgument("α and η must be positive".into()));
    }
    Ok(alpha / (alpha + 1.0 / eta))
}

/// Per-step KL factor `1/(1+αη)²`.
pub fn kl_contraction_bound(alpha: f64, eta: f64) -> f64 {
    1.0 / (1.0 + alpha * eta).powi(2)
}

/// Log-curvature of `N(0, 1/α) ∗ N(0, 1/β)`: `αβ/(α+β)`.
pub fn convolved_curvature(alpha: f64, beta: f64) -> f64 {
    alpha * beta / (alpha + beta)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityProbe {
    pub y: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub kl: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub alpha: f64,
    /// `‖Σ‖_op` for Gaussian targets, where the bound is attained.
    pub sharp_alpha: Option<f64>,
    pub probes: Vec<StabilityProbe>,
}

impl StabilityReport {
    pub fn all_pass(&self) -> bool {
        self.probes.iter().all(|p| p.pass)
    }
}

/// Checks `½‖b(T_yπ) − b(π)‖² ≤ α·KL(T_yπ‖π)` at each probe tilt `y`, with
/// `KL(T_yπ‖π) = ⟨y, b(T_yπ)⟩ − log Z(y)`.
pub fn entropic_stability_probe(target: &TargetMeasure, probes: &[DVector<f64>], alpha_claim: f64) -> Result<StabilityReport> {
    if !target.is_exact() {
        return Err(Error::Unsupported("entropic stability probes need closed-form tilts".into()));
    }
    let d = target.dim();
    let budget = Default::default();
    let b0 = tilt(target, DVector::zeros(d), Reg::Scalar(0.0))?.mean(&budget)?;
    let mut out = Vec::with_capacity(probes.len());
    for y in probes {
        let ty = tilt(target, y.clone(), Reg::Scalar(0.0))?;
        let b = ty.mean(&budget)?;
        let kl = (y.dot(&b) - ty.log_partition()?).max(0.0);
        if !kl.is_finite() {
            return Err(Error::NonFinite { step: out.len() });
        }
        let lhs = 0.5 * (&b - &b0).norm_squared();
        let rhs = alpha_claim * kl;
        out.push(StabilityProbe {
            y: y.iter().copied().collect(),
            lhs,
            rhs,
            kl,
            pass: lhs <= rhs * (1.0 + 1e-10) + 1e-14,
        });
    }
    let sharp_alpha = match target {
        TargetMeasure::Gaussian(g) => Some(g.cov_op_norm()),
        _ => None,
    };
    Ok(StabilityReport { alpha: alpha_claim, sharp_alpha, probes: out })
}

/// Estimated one-step KL contraction `KL(μ₁‖π)/KL(μ₀‖π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionEstimate {
    pub kl_init: f64,
    pub kl_step: f64,
    /// Deterministic ratio (exact law or quadrature).
    pub ratio: f64,
    /// Monte Carlo ratio from simulated transitions and its delta-method
    /// standard error; equal to `ratio` with zero error for Gaussian targets.
    pub mc_ratio: f64,
    pub mc_stderr: f64,
    pub bound: f64,
}

/// Quadrature nodes for 1-d computations.
const QUAD_POINTS: usize = 4001;

/// One-step KL contraction from a Gaussian start. Gaussian targets use the
/// exact law; 1-d strongly log-concave potentials use quadrature for the
/// densities of `π` and `μ₁`, and a Monte Carlo estimate from `n_paths`
/// simulated transitions with plug-in log-density ratios.
pub fn heat_flow_contraction_mc(
    target: &TargetMeasure,
    init: &GaussianMeasure,
    eta: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    check_dim(target.dim(), init.dim())?;
    match target {
        TargetMeasure::Gaussian(g) => {
            let laws = chain_law_propagate(init, g, eta, 1)?;
            let ratio = laws[1].kl / laws[0].kl;
            Ok(ContractionEstimate {
                kl_init: laws[0].kl,
                kl_step: laws[1].kl,
                ratio,
                mc_ratio: ratio,
                mc_stderr: 0.0,
                bound: kl_contraction_bound(1.0 / g.cov_op_norm(), eta),
            })
        }
        TargetMeasure::Potential(p) if p.dim() == 1 && p.alpha() > 0.0 => {
            potential_contraction(target, p, init, eta, n_paths, seed)
        }
        _ => Err(Error::Unsupported(
            "contraction estimates need a Gaussian target or a 1-d strongly log-concave potential".into(),
        )),
    }
}

fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// Root of the increasing `V'` by bracketing and bisection.
fn potential_mode(p: &GenericPotential) -> f64 {
    let g = |x: f64| p.gradient(&scalar(x))[0];
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) > 0.0 {
        lo *= 2.0;
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn potential_contraction(
    target: &TargetMeasure,
    p: &GenericPotential,
    init: &GaussianMeasure,
    eta: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    if n_paths < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n_paths });
    }
    let (m0, v0) = (init.mean()[0], init.cov()[(0, 0)]);
    let vy = v0 + eta;
    let mode = potential_mode(p);
    let spread = 12.0 * (vy.sqrt() + 1.0 / p.alpha().sqrt() + eta.sqrt());
    let (lo, hi) = ((m0 - spread).min(mode - spread), (m0 + spread).max(mode + spread));
    let (xs, ws) = simpson_rule(lo, hi, QUAD_POINTS);
    let log_w: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
    let neg_v: Vec<f64> = xs.iter().map(|&x| -p.value(&scalar(x))).collect();
    let log_zpi = log_sum_exp(neg_v.iter().zip(&log_w).map(|(a, b)| a + b));
    let log_pi = |x: f64| -p.value(&scalar(x)) - log_zpi;
    let log_pi_nodes: Vec<f64> = neg_v.iter().map(|v| v - log_zpi).collect();
    // a_j = log w_j + log ρ_y(y_j) − log ∫π(z)φ_η(y_j − z)dz
    let a: Vec<f64> = xs
        .iter()
        .zip(&log_w)
        .map(|(&y, lw)| {
            let log_zy = log_sum_exp(
                xs.iter().zip(&log_w).zip(&log_pi_nodes).map(|((&z, lwz), lp)| lwz + lp + log_normal_pdf(z, y, eta)),
            );
            lw + log_normal_pdf(y, m0, vy) - log_zy
        })
        .collect();
    // μ₁(x) = π(x)·h(x) with h(x) = Σ_j a_j φ_η(x − y_j)
    let log_h = |x: f64| log_sum_exp(xs.iter().zip(&a).map(|(&y, aj)| aj + log_normal_pdf(x, y, eta)));
    let mut kl_init = 0.0;
    let mut kl_step = 0.0;
    for ((&x, w), lp) in xs.iter().zip(&ws).zip(&log_pi_nodes) {
        let l0 = log_normal_pdf(x, m0, v0);
        kl_init += w * l0.exp() * (l0 - lp);
        let lh = log_h(x);
        kl_step += w * (lp + lh).exp() * lh;
    }
    let cfg = RgdConfig::new(target.clone(), eta, 1)?;
    let pairs = run_ensemble(n_paths, |id| -> Result<(f64, f64)> {
        let mut rng = rng::stream(seed, id, Purpose::Sampler);
        let x0 = init.sample(&mut rng);
        let x1 = rgd_step(&x0, &cfg, &mut rng)?;
        Ok((log_h(x1[0]), log_normal_pdf(x0[0], m0, v0) - log_pi(x0[0])))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, (a, b)| (acc.0 + a / n, acc.1 + b / n));
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        vaa += (a - ma).powi(2) / (n - 1.0);
        vbb += (b - mb).powi(2) / (n - 1.0);
        vab += (a - ma) * (b - mb) / (n - 1.0);
    }
    let r = ma / mb;
    let var_r = (vaa - 2.0 * r * vab + r * r * vbb) / (mb * mb * n);
    Ok(ContractionEstimate {
        kl_init,
        kl_step,
        ratio: kl_step / kl_init,
        mc_ratio: r,
        mc_stderr: var_r.max(0.0).sqrt(),
        bound: kl_contraction_bound(p.alpha(), eta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{ks_two_sample, quad::integrate};
    use crate::targets::{BuiltinPotential, GaussianMixture};

    fn std_normal() -> GaussianMeasure {
        GaussianMeasure::scalar(0.0, 1.0).unwrap()
    }

    #[test]
    fn mean_shift_contracts_by_a_quarter() {
        for a in [0.5, 2.0, -3.0] {
            let laws = chain_law_propagate(&GaussianMeasure::scalar(a, 1.0).unwrap(), &std_normal(), 1.0, 4).unwrap();
            assert!((laws[1].mean[0] - a / 2.0).abs() < 1e-15);
            assert!((laws[1].cov[0][0] - 1.0).abs() < 1e-15);
            for r in ChainLaw::ratios(&laws) {
                assert!((r - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_and_mismatched_starts() {
        let target = GaussianMeasure::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7]),
        )
        .unwrap();
        let laws = chain_law_propagate(&target, &target, 0.8, 5).unwrap();
        for l in &laws {
            assert!(l.kl.abs() < 1e-12);
            let m = l.measure().unwrap();
            assert!((m.mean() - target.mean()).amax() < 1e-12);
            assert!((m.cov() - target.cov()).amax() < 1e-12);
        }
        for s2 in [0.5, 2.0, 10.0] {
            let laws = chain_law_propagate(&GaussianMeasure::scalar(0.0, s2).unwrap(), &std_normal(), 1.0, 6).unwrap();
            assert!(ChainLaw::ratios(&laws).iter().all(|r| *r <= 0.25 + 1e-12));
        }
    }

    #[test]
    fn first_stage_posterior_is_conjugate() {
        // x′ | y for target N(0,1), η = 1 is N(y/2, ½); check against quadrature
        let target: TargetMeasure = std_normal().into();
        let y = 1.3;
        let post = tilt(&target, DVector::from_element(1, y), Reg::Scalar(1.0)).unwrap();
        let m = post.moments(&Default::default()).unwrap();
        let w = |x: f64| (-(x - y).powi(2) / 2.0 - x * x / 2.0).exp();
        let z = integrate(w, -12.0, 12.0, 4001);
        let qm = integrate(|x| x * w(x), -12.0, 12.0, 4001) / z;
        assert!((m.mean[0] - y / 2.0).abs() < 1e-15 && (qm - y / 2.0).abs() < 1e-10);
        assert!((m.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tiny_steps_barely_move() {
        let cfg = RgdConfig::new(std_normal().into(), 1e-6, 1).unwrap();
        let mut rng = rng::stream(0, 0, Purpose::Sampler);
        let moved = (0..1000)
            .filter(|_| {
                let x = rng::normal_vector(&mut rng, 1);
                (rgd_step(&x, &cfg, &mut rng).unwrap() - x).norm() > 1e-2
            })
            .count();
        assert!(moved <= 10);
    }

    #[test]
    fn two_transition_forms_agree_in_law() {
        let mix: TargetMeasure = GaussianMixture::symmetric_pair(DVector::from_element(1, 1.5), 0.5).unwrap().into();
        let cfg = RgdConfig::new(mix, 0.7, 1).unwrap();
        let x = DVector::from_element(1, 0.4);
        let mut r1 = rng::stream(1, 0, Purpose::Sampler);
        let mut r2 = rng::stream(2, 0, Purpose::Sampler);
        let a: Vec<f64> = (0..4000).map(|_| rgd_step(&x, &cfg, &mut r1).unwrap()[0]).collect();
        let b: Vec<f64> = (0..4000).map(|_| rgd_step_localization(&x, &cfg, &mut r2).unwrap()[0]).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.001);
    }

    #[test]
    fn bound_formulas() {
        assert_eq!(lsi_lower_bound(1.0, 1.0).unwrap(), 0.5);
        assert!((lsi_lower_bound(2.0, 1e12).unwrap() - 1.0).abs() < 1e-11);
        let mut rng = rng::stream(9, 0, Purpose::Aux);
        for _ in 0..100 {
            let (a, e) = (rng.random::<f64>() * 10.0 + 1e-3, rng.random::<f64>() * 10.0 + 1e-3);
            assert!(1.0 - lsi_lower_bound(a, e).unwrap() >= kl_contraction_bound(a, e) - 1e-12);
            let b = rng.random::<f64>() * 10.0 + 1e-3;
            let var = 1.0 / a + 1.0 / b;
            assert!((1.0 / var - convolved_curvature(a, b)).abs() <= 1e-12 * convolved_curvature(a, b));
        }
    }

    #[test]
    fn gaussian_stability_is_sharp_on_top_eigenvector() {
        let g = GaussianMeasure::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0])).unwrap();
        let top = g.eigenvectors().column(g.eigenvalues().imax()).into_owned();
        let target: TargetMeasure = g.clone().into();
        let alpha = g.cov_op_norm();
        let rep = entropic_stability_probe(&target, &[top * 0.8, DVector::zeros(2), DVector::from_vec(vec![1.0, -2.0])], alpha)
            .unwrap();
        assert!(rep.all_pass());
        assert!((rep.probes[0].lhs - rep.probes[0].rhs).abs() < 1e-10);
        assert_eq!((rep.probes[1].lhs, rep.probes[1].rhs), (0.0, 0.0));
        let y = DVector::from_vec(vec![1.0, -2.0]);
        assert!((rep.probes[2].lhs - 0.5 * (g.cov() * &y).norm_squared()).abs() < 1e-12);
        assert!((rep.probes[2].kl - 0.5 * y.dot(&(g.cov() * &y))).abs() < 1e-12);
    }

    #[test]
    fn mixture_stability_with_covariance_bound() {
        let m = GaussianMixture::symmetric_pair(DVector::from_vec(vec![1.0, 0.5]), 0.8).unwrap();
        let alpha = m.tilt_covariance_bound().unwrap();
        let target: TargetMeasure = m.into();
        let mut rng = rng::stream(4, 0, Purpose::Aux);
        let probes: Vec<_> = (0..50).map(|_| rng::normal_vector(&mut rng, 2) * 2.0).collect();
        assert!(entropic_stability_probe(&target, &probes, alpha).unwrap().all_pass());
    }

    #[test]
    fn quartic_contraction_within_bound() {
        let target: TargetMeasure = GenericPotential::builtin(BuiltinPotential::Quartic { dim: 1, coef: 0.1 }).into();
        let init = GaussianMeasure::scalar(2.0, 1.0).unwrap();
        let est = heat_flow_contraction_mc(&target, &init, 1.0, 400, 3).unwrap();
        assert!(est.ratio <= est.bound, "{est:?}");
        assert!(est.mc_ratio <= est.bound + 4.0 * est.mc_stderr, "{est:?}");
    }

    #[test]
    fn gaussian_contraction_delegates() {
        let target: TargetMeasure = std_normal().into();
        let est = heat_flow_contraction_mc(&target, &GaussianMeasure::scalar(2.0, 1.0).unwrap(), 1.0, 10, 0).unwrap();
        assert!((est.ratio - 0.25).abs() < 1e-12 && est.mc_stderr == 0.0);
    }
}
