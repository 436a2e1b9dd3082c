//! Proximal-sampler contraction, kernel identity, entropic stability and the
//! anisotropic reduction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{law_checks, Check, SuiteConfig};
use crate::error::Result;
use crate::localize::{anisotropic_run, tilt_sde_run};
use crate::rgd::{
    chain_law_propagate, entropic_stability_probe, heat_flow_contraction_mc, kl_contraction_bound, lsi_lower_bound,
    rgd_step, rgd_step_localization, ChainLaw, RgdConfig,
};
use crate::rng::{self, Purpose};
use crate::sde::{wiener_increments, TimeGrid};
use crate::targets::{BuiltinPotential, GaussianMeasure, GaussianMixture, GenericPotential, MomentBudget, TargetMeasure};

fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.2
}

/// Exact Gaussian contraction factors and the quartic-target estimate.
pub fn contraction_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let target = GaussianMeasure::scalar(0.0, 1.0)?;
    let mut sharp: f64 = 0.0;
    for a in [0.5, 1.0, 2.0, -3.0] {
        let laws = chain_law_propagate(&GaussianMeasure::scalar(a, 1.0)?, &target, 1.0, 5)?;
        sharp = ChainLaw::ratios(&laws).iter().fold(sharp, |acc, r| acc.max((r - 0.25).abs()));
    }
    let mut excess = f64::NEG_INFINITY;
    for s2 in [0.5, 2.0, 10.0] {
        let laws = chain_law_propagate(&GaussianMeasure::scalar(0.0, s2)?, &target, 1.0, 5)?;
        excess = ChainLaw::ratios(&laws).iter().fold(excess, |acc, r| acc.max(r - 0.25));
    }
    let mut rng = rng::stream(cfg.sub_seed(30), 0, Purpose::Aux);
    for _ in 0..20 {
        let d = 1 + rng.random_range(0..3);
        let t = GaussianMeasure::new(DVector::from_fn(d, |_, _| rng.random::<f64>()), random_spd(&mut rng, d))?;
        let init = GaussianMeasure::new(DVector::from_fn(d, |_, _| 3.0 * rng.random::<f64>()), random_spd(&mut rng, d))?;
        let eta = 0.1 + 2.0 * rng.random::<f64>();
        let alpha = 1.0 / t.cov_op_norm();
        let laws = chain_law_propagate(&init, &t, eta, 3)?;
        let bound = kl_contraction_bound(alpha, eta);
        excess = ChainLaw::ratios(&laws).iter().fold(excess, |acc, r| acc.max(r - bound));
    }
    let mut checks = vec![
        Check::at_most("chain law mean-shift KL ratio vs 1/4", sharp, 1e-12),
        Check::at_most("chain law KL ratio minus bound, max over gaussian triples", excess, 1e-12),
        Check::at_most("lsi lower bound (1,1) vs 0.5", (lsi_lower_bound(1.0, 1.0)? - 0.5).abs(), 0.0),
    ];
    let quartic: TargetMeasure = GenericPotential::builtin(BuiltinPotential::Quartic { dim: 1, coef: 0.1 }).into();
    let init = GaussianMeasure::scalar(2.0, 1.0)?;
    for eta in [0.5, 1.0] {
        let est = heat_flow_contraction_mc(&quartic, &init, eta, cfg.paths, cfg.sub_seed(31))?;
        checks.push(Check::at_most(format!("quartic KL ratio (quadrature) minus bound, eta={eta}"), est.ratio - est.bound, 0.0));
        checks.push(Check::at_most(
            format!("quartic KL ratio (monte carlo) minus bound, eta={eta}"),
            est.mc_ratio - est.bound,
            4.0 * est.mc_stderr,
        ));
    }
    Ok(checks)
}

/// Direct two-stage transitions against channel-then-posterior transitions.
pub fn kernel_identity_suite(targets: &[TargetMeasure], cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (j, target) in targets.iter().enumerate() {
        let rcfg = RgdConfig::new(target.clone(), cfg.eta, 1)?;
        let x = DVector::from_element(target.dim(), 0.7);
        let mut r1 = rng::stream(cfg.sub_seed(32), j as u64, Purpose::Sampler);
        let mut r2 = rng::stream(cfg.sub_seed(33), j as u64, Purpose::Sampler);
        let a = (0..cfg.paths).map(|_| rgd_step(&x, &rcfg, &mut r1)).collect::<Result<Vec<_>>>()?;
        let b = (0..cfg.paths).map(|_| rgd_step_localization(&x, &rcfg, &mut r2)).collect::<Result<Vec<_>>>()?;
        for i in 0..target.dim() {
            let prefix = format!("rgd kernel identity {} [{}]", target.kind(), i + 1);
            checks.extend(law_checks(&prefix, &super::column(&a, i), &super::column(&b, i), cfg.level)?);
        }
    }
    Ok(checks)
}

/// Entropic stability: sharp Gaussian case and a mixture with its uniform
/// tilt-covariance bound.
pub fn stability_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = rng::stream(cfg.sub_seed(34), 0, Purpose::Aux);
    let g = GaussianMeasure::new(DVector::zeros(3), random_spd(&mut rng, 3))?;
    let alpha = g.cov_op_norm();
    let top = g.eigenvectors().column(g.eigenvalues().imax()).into_owned();
    let target: TargetMeasure = g.into();
    let probes: Vec<DVector<f64>> = (0..100).map(|_| rng::normal_vector(&mut rng, 3) * 2.0).collect();
    let rep = entropic_stability_probe(&target, &probes, alpha)?;
    let fails = rep.probes.iter().filter(|p| !p.pass).count();
    let tops: Vec<DVector<f64>> = (0..100).map(|k| &top * (0.05 * (k as f64 - 49.5))).collect();
    let eq = entropic_stability_probe(&target, &tops, alpha)?;
    let gap = eq.probes.iter().map(|p| (p.lhs - p.rhs).abs()).fold(0.0, f64::max);

    let mix = GaussianMixture::symmetric_pair(DVector::from_vec(vec![1.0, -0.5, 0.3]), 0.7)?;
    let alpha_mix = mix.tilt_covariance_bound().expect("shared covariance");
    let mix_rep = entropic_stability_probe(&mix.into(), &probes, alpha_mix)?;
    let mix_fails = mix_rep.probes.iter().filter(|p| !p.pass).count();
    Ok(vec![
        Check::at_most("gaussian entropic stability failures over 100 probes", fails as f64, 0.0),
        Check::at_most("gaussian entropic stability gap along top eigenvector, 100 probes", gap, 1e-10),
        Check::at_most("mixture entropic stability failures over 100 probes", mix_fails as f64, 0.0),
    ])
}

/// The anisotropic process with identity control reproduces the isotropic
/// run bit for bit.
pub fn anisotropic_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let bases: Vec<TargetMeasure> = vec![
        GaussianMeasure::new(DVector::from_vec(vec![0.3, -1.0]), DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]))?
            .into(),
        GaussianMixture::symmetric_pair(DVector::from_vec(vec![1.2, 0.4]), 0.6)?.into(),
    ];
    let grid = TimeGrid::uniform(0.0, cfg.horizon, cfg.steps(cfg.horizon))?;
    let budget = MomentBudget::default();
    let mut mismatches = 0usize;
    for (j, base) in bases.iter().enumerate() {
        for id in 0..4 {
            let w = wiener_increments(&grid, 2, cfg.sub_seed(35), (j * 4 + id) as u64)?;
            let iso = tilt_sde_run(base, &grid, &w, &budget)?;
            let ani = anisotropic_run(base, &grid, &w, &budget, |_, _| DMatrix::identity(2, 2))?;
            mismatches += iso
                .iter()
                .zip(&ani)
                .filter(|(a, b)| a.c != b.c || a.mean != b.mean || a.t != b.t)
                .count();
        }
    }
    Ok(vec![Check::at_most("anisotropic C=I vs isotropic, mismatched states", mismatches as f64, 0.0)])
}
