//! Discrete static Schrödinger bridges by log-domain Sinkhorn scaling, the
//! entropic-transport objective, and the Föllmer drift with its Girsanov
//! energy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::log_sum_exp;
use crate::polchinski::{polchinski_run, RenormPotential};
use crate::sde::{run_ensemble, wiener_increments, TimeGrid};
use crate::targets::{MomentBudget, TargetMeasure};

/// Weighted point cloud; `points` holds one atom per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: DMatrix<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim(points.nrows(), weights.len())?;
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("atom weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Atoms on the real line.
    pub fn on_line(xs: &[f64], weights: Vec<f64>) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(xs.len(), 1, xs), weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn sq_dist(&self, i: usize, other: &Self, j: usize) -> f64 {
        (self.points.row(i) - other.points.row(j)).norm_squared()
    }
}

/// `R_ij = μ_i k(x_i, y_j) / Σ_l k(x_i, y_l)` with `k = exp(−½‖x−y‖²)`.
pub fn gibbs_reference(mu: &DiscreteMeasure, pi: &DiscreteMeasure) -> Result<DMatrix<f64>> {
    check_dim(mu.points.ncols(), pi.points.ncols())?;
    let (n, m) = (mu.len(), pi.len());
    let mut r = DMatrix::zeros(n, m);
    for i in 0..n {
        let logk: Vec<f64> = (0..m).map(|j| -0.5 * mu.sq_dist(i, pi, j)).collect();
        let lse = log_sum_exp(logk.iter().copied());
        for j in 0..m {
            r[(i, j)] = mu.weights[i] * (logk[j] - lse).exp();
        }
    }
    Ok(r)
}

/// A coupling together with the marginals it should have.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteCoupling {
    pub gamma: Vec<Vec<f64>>,
    pub row_targets: Vec<f64>,
    pub col_targets: Vec<f64>,
}

impl DiscreteCoupling {
    pub fn matrix(&self) -> DMatrix<f64> {
        crate::linalg::matrix_from_rows(&self.gamma).expect("rectangular coupling")
    }

    /// Larger of the L1 row and column marginal violations.
    pub fn marginal_residual(&self) -> f64 {
        marginal_residual(&self.matrix(), &self.row_targets, &self.col_targets)
    }
}

fn marginal_residual(g: &DMatrix<f64>, rows: &[f64], cols: &[f64]) -> f64 {
    let r: f64 = g.row_iter().zip(rows).map(|(row, t)| (row.sum() - t).abs()).sum();
    let c: f64 = g.column_iter().zip(cols).map(|(col, t)| (col.sum() - t).abs()).sum();
    r.max(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct SinkhornResult {
    pub coupling: DiscreteCoupling,
    pub log_f: Vec<f64>,
    pub log_g: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Marginal residual after each iteration.
    pub trace: Vec<f64>,
}

impl SinkhornResult {
    pub fn f(&self) -> Vec<f64> {
        self.log_f.iter().map(|v| v.exp()).collect()
    }

    pub fn g(&self) -> Vec<f64> {
        self.log_g.iter().map(|v| v.exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000 }
    }
}

fn coupling_from_scalings(log_r: &DMatrix<f64>, log_f: &[f64], log_g: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(log_r.nrows(), log_r.ncols(), |i, j| (log_r[(i, j)] + log_f[i] + log_g[j]).exp())
}

/// Alternate row and column scalings of `ref_kernel` until the coupling
/// `γ = diag(f) R diag(g)` has marginals `μ`, `π` to within `tol`.
/// Non-convergence is reported through `converged`, not as an error.
pub fn sinkhorn(
    mu: &DiscreteMeasure,
    pi: &DiscreteMeasure,
    ref_kernel: &DMatrix<f64>,
    cfg: &SinkhornConfig,
) -> Result<SinkhornResult> {
    let (n, m) = (mu.len(), pi.len());
    check_dim(n, ref_kernel.nrows())?;
    check_dim(m, ref_kernel.ncols())?;
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidArgument("Sinkhorn needs tol > 0 and max_iter ≥ 1".into()));
    }
    if ref_kernel.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("reference kernel must be strictly positive".into()));
    }
    let log_r = ref_kernel.map(f64::ln);
    let log_mu: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
    let log_pi: Vec<f64> = pi.weights.iter().map(|w| w.ln()).collect();
    let mut log_f = vec![0.0; n];
    let mut log_g = vec![0.0; m];
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut gamma = DMatrix::zeros(n, m);
    while trace.len() < cfg.max_iter {
        for i in 0..n {
            log_f[i] = log_mu[i] - log_sum_exp((0..m).map(|j| log_r[(i, j)] + log_g[j]));
        }
        for j in 0..m {
            log_g[j] = log_pi[j] - log_sum_exp((0..n).map(|i| log_r[(i, j)] + log_f[i]));
        }
        gamma = coupling_from_scalings(&log_r, &log_f, &log_g);
        residual = marginal_residual(&gamma, &mu.weights, &pi.weights);
        trace.push(residual);
        if residual <= cfg.tol {
            break;
        }
    }
    Ok(SinkhornResult {
        coupling: DiscreteCoupling {
            gamma: crate::linalg::matrix_to_rows(&gamma),
            row_targets: mu.weights.clone(),
            col_targets: pi.weights.clone(),
        },
        log_f,
        log_g,
        iterations: trace.len(),
        converged: residual <= cfg.tol,
        residual,
        trace,
    })
}

/// `Σ γ log(γ/q)` with `0·log 0 = 0`; `+∞` where `γ > 0 = q`.
pub fn kl_matrix(gamma: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    gamma
        .iter()
        .zip(q.iter())
        .map(|(&g, &r)| match (g > 0.0, r > 0.0) {
            (false, _) => 0.0,
            (true, false) => f64::INFINITY,
            (true, true) => g * (g / r).ln(),
        })
        .sum()
}

/// Static-bridge and entropic-transport objectives of one coupling:
/// `KL(γ‖R)` and `Σ ½‖x−y‖²γ + KL(γ‖μ⊗π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectivePair {
    pub ssb: f64,
    pub eot: f64,
}

pub fn objective_pair(
    gamma: &DMatrix<f64>,
    mu: &DiscreteMeasure,
    pi: &DiscreteMeasure,
    ref_kernel: &DMatrix<f64>,
) -> Result<ObjectivePair> {
    check_dim(mu.len(), gamma.nrows())?;
    check_dim(pi.len(), gamma.ncols())?;
    let product = DMatrix::from_fn(mu.len(), pi.len(), |i, j| mu.weights[i] * pi.weights[j]);
    let cost: f64 = (0..mu.len())
        .flat_map(|i| (0..pi.len()).map(move |j| (i, j)))
        .map(|(i, j)| 0.5 * mu.sq_dist(i, pi, j) * gamma[(i, j)])
        .sum();
    Ok(ObjectivePair { ssb: kl_matrix(gamma, ref_kernel), eot: cost + kl_matrix(gamma, &product) })
}

/// `eot − ssb` for any coupling of `μ` and `π` under the Gibbs reference:
/// `−Σ μ_i log Σ_j k(x_i,y_j) − Σ π_j log π_j`.
pub fn objective_shift(mu: &DiscreteMeasure, pi: &DiscreteMeasure) -> f64 {
    let rows: f64 = (0..mu.len())
        .map(|i| mu.weights[i] * log_sum_exp((0..pi.len()).map(|j| -0.5 * mu.sq_dist(i, pi, j))))
        .sum();
    let ent: f64 = pi.weights.iter().map(|p| p * p.ln()).sum();
    -rows - ent
}

/// Fixed-point defect of the discrete Schrödinger system
/// `f_i Σ_j R_ij g_j = μ_i`, `g_j Σ_i R_ij f_i = π_j`.
pub fn schrodinger_residual(
    result: &SinkhornResult,
    mu: &DiscreteMeasure,
    pi: &DiscreteMeasure,
    ref_kernel: &DMatrix<f64>,
) -> f64 {
    let (f, g) = (result.f(), result.g());
    let mut worst: f64 = 0.0;
    for i in 0..mu.len() {
        let s: f64 = (0..pi.len()).map(|j| ref_kernel[(i, j)] * g[j]).sum();
        worst = worst.max((f[i] * s - mu.weights[i]).abs());
    }
    for j in 0..pi.len() {
        let s: f64 = (0..mu.len()).map(|i| ref_kernel[(i, j)] * f[i]).sum();
        worst = worst.max((g[j] * s - pi.weights[j]).abs());
    }
    worst
}

/// Largest deviation between the bridge's conditional law of the endpoint
/// given both earlier states and the h-transform `(g₁/g_τ)·K₂`, on the
/// three-time chain `μ → K₁ → K₂` conditioned to end in `π`.
pub fn markov_factorization_defect(
    mu: &DiscreteMeasure,
    pi: &DiscreteMeasure,
    k1: &DMatrix<f64>,
    k2: &DMatrix<f64>,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let n = mu.len();
    check_dim(n, k1.nrows())?;
    check_dim(k1.ncols(), k2.nrows())?;
    check_dim(pi.len(), k2.ncols())?;
    let k12 = k1 * k2;
    let r01 = DMatrix::from_fn(n, pi.len(), |i, j| mu.weights[i] * k12[(i, j)]);
    let res = sinkhorn(mu, pi, &r01, cfg)?;
    if !res.converged {
        return Err(Error::InvalidArgument("bridge did not converge".into()));
    }
    let (f, g) = (res.f(), res.g());
    let g_mid = k2 * DVector::from_vec(g.clone());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for k in 0..k2.nrows() {
            let joint: Vec<f64> = (0..pi.len())
                .map(|j| f[i] * mu.weights[i] * k1[(i, k)] * k2[(k, j)] * g[j])
                .collect();
            let total: f64 = joint.iter().sum();
            for (j, p) in joint.iter().enumerate() {
                let h = g[j] / g_mid[k] * k2[(k, j)];
                worst = worst.max((p / total - h).abs());
            }
        }
    }
    Ok(worst)
}

/// `u_τ(v) = −∇V_τ(v)`, the optimal drift from `δ₀` to the base.
#[derive(Debug, Clone)]
pub struct FollmerDrift<'a> {
    base: &'a TargetMeasure,
    budget: MomentBudget,
}

impl<'a> FollmerDrift<'a> {
    pub fn new(base: &'a TargetMeasure, budget: MomentBudget) -> Self {
        Self { base, budget }
    }

    pub fn base(&self) -> &'a TargetMeasure {
        self.base
    }

    pub fn eval(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-RenormPotential::new(self.base, tau, self.budget)?.gradient(v)?)
    }
}

/// Terminal state of the Föllmer SDE at the end of `tau_grid`.
pub fn follmer_sample(
    base: &TargetMeasure,
    tau_grid: &TimeGrid,
    seed: u64,
    stream_id: u64,
    budget: &MomentBudget,
) -> Result<DVector<f64>> {
    let w = wiener_increments(tau_grid, base.dim(), seed, stream_id)?;
    Ok(polchinski_run(base, tau_grid, &w, budget)?.terminal())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub energy: f64,
    pub stderr: f64,
}

/// `½∫E‖u_τ(v_τ)‖²dτ` along paths of `dv = u_τ(v)dτ + dW`, by left Riemann
/// sums on `tau_grid` averaged over `n_paths` streams.
pub fn girsanov_energy(drift: &FollmerDrift<'_>, tau_grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<EnergyEstimate> {
    if n_paths < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n_paths });
    }
    if tau_grid.start() != 0.0 || !(tau_grid.end() < 1.0) {
        return Err(Error::InvalidGrid("energy grids run from τ = 0 to below 1".into()));
    }
    let d = drift.base.dim();
    let per_path = run_ensemble(n_paths, |id| -> Result<f64> {
        let w = wiener_increments(tau_grid, d, seed, id)?;
        let mut v = DVector::zeros(d);
        let mut acc = 0.0;
        for k in 0..tau_grid.steps() {
            let dt = tau_grid.dt(k);
            let u = drift.eval(tau_grid.times()[k], &v)?;
            acc += 0.5 * u.norm_squared() * dt;
            v = (v + u * dt) + w.increment_vec(k);
        }
        Ok(acc)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let est = crate::diagnostics::MeanEstimate::of(&per_path);
    Ok(EnergyEstimate { energy: est.mean, stderr: est.stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::GaussianMeasure;
    use rand::Rng;

    fn two_point() -> (DiscreteMeasure, DiscreteMeasure) {
        let a = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.5, 0.5]).unwrap();
        (a.clone(), a)
    }

    #[test]
    fn single_atom_source() {
        let mu = DiscreteMeasure::on_line(&[0.3], vec![1.0]).unwrap();
        let pi = DiscreteMeasure::on_line(&[-1.0, 0.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let r = gibbs_reference(&mu, &pi).unwrap();
        let res = sinkhorn(&mu, &pi, &r, &SinkhornConfig::default()).unwrap();
        assert!(res.iterations <= 2 && res.converged);
        let g = res.coupling.matrix();
        for j in 0..3 {
            assert!((g[(0, j)] - pi.weights()[j]).abs() < 1e-15);
        }
        assert!(schrodinger_residual(&res, &mu, &pi, &r) < 1e-15);
    }

    #[test]
    fn two_by_two_matches_grid_search() {
        let (mu, pi) = two_point();
        let r = gibbs_reference(&mu, &pi).unwrap();
        let res = sinkhorn(&mu, &pi, &r, &SinkhornConfig::default()).unwrap();
        let ssb = |p: f64| {
            let g = DMatrix::from_row_slice(2, 2, &[p, 0.5 - p, 0.5 - p, p]);
            objective_pair(&g, &mu, &pi, &r).unwrap()
        };
        let (mut best_ssb, mut best_eot) = (f64::INFINITY, f64::INFINITY);
        let n = 1_000_000;
        for k in 0..=n {
            let o = ssb(0.5 * k as f64 / n as f64);
            best_ssb = best_ssb.min(o.ssb);
            best_eot = best_eot.min(o.eot);
        }
        let o = objective_pair(&res.coupling.matrix(), &mu, &pi, &r).unwrap();
        assert!((o.ssb - best_ssb).abs() < 1e-6);
        assert!(o.ssb <= best_ssb + 1e-12);
        assert!((o.eot - best_eot).abs() < 1e-6);
    }

    #[test]
    fn product_reference_gives_product_coupling() {
        let mu = DiscreteMeasure::on_line(&[0.0, 1.0, 3.0], vec![0.2, 0.3, 0.5]).unwrap();
        let pi = DiscreteMeasure::on_line(&[0.5, 2.0], vec![0.6, 0.4]).unwrap();
        let r = DMatrix::from_fn(3, 2, |i, j| mu.weights()[i] * pi.weights()[j]);
        let res = sinkhorn(&mu, &pi, &r, &SinkhornConfig::default()).unwrap();
        assert!(kl_matrix(&res.coupling.matrix(), &r).abs() < 1e-14);
        let o = objective_pair(&r, &mu, &pi, &gibbs_reference(&mu, &pi).unwrap()).unwrap();
        let cost: f64 = (0..3).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| {
            0.5 * (mu.points()[(i, 0)] - pi.points()[(j, 0)]).powi(2) * r[(i, j)]
        }).sum();
        assert!((o.eot - cost).abs() < 1e-15);
    }

    #[test]
    fn objectives_differ_by_a_constant() {
        let mut rng = crate::rng::stream(3, 0, crate::rng::Purpose::Aux);
        for (n, m) in [(2, 3), (5, 4), (10, 10)] {
            let w = |k: usize, rng: &mut crate::rng::Stream| {
                let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let xs: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() * 3.0).collect();
            let ys: Vec<f64> = (0..m * 2).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect();
            let mu = DiscreteMeasure::new(DMatrix::from_row_slice(n, 2, &xs), w(n, &mut rng)).unwrap();
            let pi = DiscreteMeasure::new(DMatrix::from_row_slice(m, 2, &ys), w(m, &mut rng)).unwrap();
            let r = gibbs_reference(&mu, &pi).unwrap();
            let shift = objective_shift(&mu, &pi);
            let cfg = SinkhornConfig { tol: 1e-14, max_iter: 100_000 };
            let diffs: Vec<f64> = (0..20)
                .map(|_| {
                    let kern = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() + 0.01);
                    let g = sinkhorn(&mu, &pi, &kern, &cfg).unwrap().coupling.matrix();
                    let o = objective_pair(&g, &mu, &pi, &r).unwrap();
                    o.eot - o.ssb
                })
                .collect();
            let lo = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo <= 1e-10, "spread {}", hi - lo);
            assert!((diffs[0] - shift).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_monotone_and_factorized() {
        let mu = DiscreteMeasure::on_line(&[0.0, 0.4, 2.0, 3.5], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let pi = DiscreteMeasure::on_line(&[-1.0, 1.0, 4.0], vec![0.5, 0.25, 0.25]).unwrap();
        let r = gibbs_reference(&mu, &pi).unwrap();
        let res = sinkhorn(&mu, &pi, &r, &SinkhornConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-16));
        let g = res.coupling.matrix();
        let (f, gg) = (res.f(), res.g());
        for i in 0..4 {
            for j in 0..3 {
                let want = r[(i, j)] * f[i] * gg[j];
                assert!((g[(i, j)] - want).abs() <= 1e-12 * want);
            }
        }
        assert!(schrodinger_residual(&res, &mu, &pi, &r) <= 1e-8);
    }

    #[test]
    fn single_iteration_is_flagged() {
        let mu = DiscreteMeasure::on_line(&[0.0, 0.4, 2.0], vec![0.1, 0.2, 0.7]).unwrap();
        let pi = DiscreteMeasure::on_line(&[-1.0, 1.0, 4.0], vec![0.5, 0.3, 0.2]).unwrap();
        let r = gibbs_reference(&mu, &pi).unwrap();
        let cfg = SinkhornConfig { tol: 1e-10, max_iter: 1 };
        let res = sinkhorn(&mu, &pi, &r, &cfg).unwrap();
        assert!(!res.converged);
        assert!(schrodinger_residual(&res, &mu, &pi, &r) > cfg.tol);
    }

    #[test]
    fn zero_kernel_entry_rejected() {
        let (mu, pi) = two_point();
        let r = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.25, 0.25]);
        assert!(sinkhorn(&mu, &pi, &r, &SinkhornConfig::default()).is_err());
        let g = DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(kl_matrix(&g, &r), f64::INFINITY);
    }

    #[test]
    fn bridge_is_markov() {
        let mu = DiscreteMeasure::on_line(&[0.0, 1.0, 2.0], vec![0.3, 0.3, 0.4]).unwrap();
        let pi = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.8, 0.2]).unwrap();
        let k1 = DMatrix::from_row_slice(3, 4, &[0.1, 0.2, 0.3, 0.4, 0.4, 0.3, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25]);
        let k2 = DMatrix::from_row_slice(4, 2, &[0.9, 0.1, 0.5, 0.5, 0.3, 0.7, 0.6, 0.4]);
        let defect = markov_factorization_defect(&mu, &pi, &k1, &k2, &SinkhornConfig::default()).unwrap();
        assert!(defect <= 1e-8, "{defect}");
    }

    #[test]
    fn follmer_drift_of_shifted_gaussian() {
        let base: TargetMeasure = GaussianMeasure::scalar(2.0, 1.0).unwrap().into();
        let d = FollmerDrift::new(&base, MomentBudget::default());
        for tau in [0.0, 0.4, 0.99] {
            let u = d.eval(tau, &DVector::from_element(1, -0.7)).unwrap();
            assert!((u[0] - 2.0).abs() < 1e-12);
        }
        let zero: TargetMeasure = GaussianMeasure::standard(1).unwrap().into();
        let grid = TimeGrid::uniform(0.0, 0.999, 999).unwrap();
        let e = girsanov_energy(&FollmerDrift::new(&zero, MomentBudget::default()), &grid, 8, 0).unwrap();
        assert!(e.energy.abs() < 1e-20);
    }
}
