//! Static bridge (Sinkhorn, objective shift) and dynamic bridge (Föllmer
//! sampler, Girsanov energy) checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{column, marginal_moments, Check, SuiteConfig};
use crate::bridge::{
    follmer_sample, gibbs_reference, girsanov_energy, markov_factorization_defect, objective_pair,
    schrodinger_residual, sinkhorn, DiscreteMeasure, FollmerDrift, SinkhornConfig,
};
use crate::diagnostics::{gaussian_kl, ks_two_sample, moment_check};
use crate::error::Result;
use crate::rng::{self, Purpose};
use crate::sde::{try_run_ensemble, TimeGrid};
use crate::targets::{GaussianMeasure, MomentBudget, SamplerConfig, TargetMeasure};

fn follmer_grid(cfg: &SuiteConfig) -> Result<TimeGrid> {
    let end = 1.0 - cfg.eps_clip;
    TimeGrid::uniform(0.0, end, cfg.steps(end))
}

/// Girsanov energy of the Föllmer drift against `KL(π‖N(0,I))` for
/// `N(2,1)` and `N(0,2)`, and exactly zero for `N(0,1)`.
pub fn girsanov_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let grid = follmer_grid(cfg)?;
    let budget = MomentBudget::default();
    let mut checks = Vec::new();
    let reference = GaussianMeasure::standard(1)?;
    for (label, g) in [("N(2,1)", GaussianMeasure::scalar(2.0, 1.0)?), ("N(0,2)", GaussianMeasure::scalar(0.0, 2.0)?)] {
        let kl = gaussian_kl(g.mean(), g.cov(), reference.mean(), reference.cov())?;
        let base: TargetMeasure = g.into();
        let e = girsanov_energy(&FollmerDrift::new(&base, budget), &grid, cfg.paths, cfg.sub_seed(20))?;
        checks.push(Check::at_most(format!("girsanov energy {label} vs KL, relative error"), (e.energy - kl).abs() / kl, 0.05));
    }
    let zero: TargetMeasure = reference.into();
    let e = girsanov_energy(&FollmerDrift::new(&zero, budget), &grid, 64, cfg.sub_seed(21))?;
    checks.push(Check::at_most("girsanov energy N(0,1)", e.energy.abs(), 1e-20));
    Ok(checks)
}

/// Föllmer terminal law against exact draws from the base, and its first
/// four moments against quadrature.
pub fn follmer_suite(base: &TargetMeasure, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let grid = follmer_grid(cfg)?;
    let budget = MomentBudget::default();
    let seed = cfg.sub_seed(22);
    let term = try_run_ensemble(cfg.paths, |id| follmer_sample(base, &grid, seed, id, &budget))?;
    let mut rng = rng::stream(cfg.sub_seed(23), 0, Purpose::Sampler);
    let exact: Vec<DVector<f64>> =
        (0..cfg.paths).map(|_| base.sample_one(&mut rng, &SamplerConfig::default())).collect::<Result<_>>()?;
    let mut checks = Vec::new();
    for i in 0..base.dim() {
        let ks = ks_two_sample(&column(&term, i), &column(&exact, i))?;
        checks.push(Check::above(format!("follmer terminal vs base [{}] ks p-value", i + 1), ks.p_value, cfg.level));
    }
    if base.is_exact() {
        let m = moment_check(&column(&term, 0), &marginal_moments(base, 4)?)?;
        checks.push(Check::at_most("follmer terminal moments 1-4 max |z|", m.max_abs_z(), 4.0));
    }
    Ok(checks)
}

fn random_measure<R: Rng>(rng: &mut R, n: usize, d: usize, shift: f64) -> Result<DiscreteMeasure> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    let s: f64 = w.iter().sum();
    let pts = DMatrix::from_fn(n, d, |_, _| 3.0 * rng.random::<f64>() + shift);
    DiscreteMeasure::new(pts, w.into_iter().map(|x| x / s).collect())
}

/// Constant objective shift across couplings, brute-force optimality on the
/// 2×2 instance, Schrödinger-system residual, residual monotonicity and the
/// Markov property of the bridge.
pub fn eot_ssb_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = rng::stream(cfg.sub_seed(24), 0, Purpose::Aux);
    let tight = SinkhornConfig { tol: 1e-14, max_iter: 200_000 };
    let solve = SinkhornConfig { tol: 1e-10, max_iter: 100_000 };
    let (mut spread, mut residual, mut monotone_breaks): (f64, f64, usize) = (0.0, 0.0, 0);
    for n in 2..=10 {
        let m = 2 + (n * 7) % 9;
        let d = 1 + n % 2;
        let mu = random_measure(&mut rng, n, d, 0.0)?;
        let pi = random_measure(&mut rng, m, d, -1.0)?;
        let r = gibbs_reference(&mu, &pi)?;
        let diffs = (0..20)
            .map(|_| {
                let kern = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() + 0.01);
                let g = sinkhorn(&mu, &pi, &kern, &tight)?.coupling.matrix();
                let o = objective_pair(&g, &mu, &pi, &r)?;
                Ok(o.eot - o.ssb)
            })
            .collect::<Result<Vec<f64>>>()?;
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        let res = sinkhorn(&mu, &pi, &r, &solve)?;
        residual = residual.max(schrodinger_residual(&res, &mu, &pi, &r));
        monotone_breaks += res.trace.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12) + 1e-16).count();
    }

    let two = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.5, 0.5])?;
    let r = gibbs_reference(&two, &two)?;
    let res = sinkhorn(&two, &two, &r, &solve)?;
    let best = objective_pair(&res.coupling.matrix(), &two, &two, &r)?;
    let grid_n = 1_000_000;
    let (mut grid_ssb, mut grid_eot) = (f64::INFINITY, f64::INFINITY);
    for k in 0..=grid_n {
        let p = 0.5 * k as f64 / grid_n as f64;
        let g = DMatrix::from_row_slice(2, 2, &[p, 0.5 - p, 0.5 - p, p]);
        let o = objective_pair(&g, &two, &two, &r)?;
        grid_ssb = grid_ssb.min(o.ssb);
        grid_eot = grid_eot.min(o.eot);
    }

    let mu3 = DiscreteMeasure::on_line(&[0.0, 1.0, 2.0], vec![0.3, 0.3, 0.4])?;
    let pi3 = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.8, 0.2])?;
    let k1 = DMatrix::from_fn(3, 4, |_, _| rng.random::<f64>() + 0.05);
    let k2 = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>() + 0.05);
    let normalize = |k: DMatrix<f64>| {
        let mut k = k;
        for mut row in k.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        k
    };
    let defect = markov_factorization_defect(&mu3, &pi3, &normalize(k1), &normalize(k2), &solve)?;

    Ok(vec![
        Check::at_most("eot - ssb spread over 20 couplings, max over instances", spread, 1e-10),
        Check::at_most("sinkhorn 2x2 ssb vs grid optimum", (best.ssb - grid_ssb).abs(), 1e-6),
        Check::at_most("sinkhorn 2x2 eot vs grid optimum", (best.eot - grid_eot).abs(), 1e-6),
        Check::at_most("schrodinger system residual at tol 1e-10", residual, 1e-8),
        Check::at_most("sinkhorn residual increases", monotone_breaks as f64, 0.0),
        Check::at_most("bridge markov factorization defect", defect, 1e-8),
    ])
}
