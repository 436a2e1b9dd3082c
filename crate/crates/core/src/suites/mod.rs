//! Verification suites: each runs one family of cross-construction or
//! closed-form checks and returns named pass/fail results with the observed
//! value and the tolerance it was held to.

mod bridge;
mod equiv;
mod lsi;
mod rgd;

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{ks_two_sample, quad::integrate, MeanEstimate};
use crate::error::{Error, Result};
use crate::targets::TargetMeasure;

pub use bridge::{eot_ssb_suite, follmer_suite, girsanov_suite};
pub use equiv::{
    channel_suite, diffusion_suite, particle_suite, polchinski_equation_suite, polchinski_suite, tweedie_suite,
};
pub use lsi::{entropy_stability_suite, lsi_suite};
pub use rgd::{anisotropic_suite, contraction_suite, kernel_identity_suite, stability_suite};

/// Budgets and grids shared by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub paths: usize,
    pub particles: usize,
    pub particle_runs: usize,
    pub dt: f64,
    pub horizon: f64,
    pub eps_clip: f64,
    pub u_max: f64,
    pub level: f64,
    pub eta: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: 10_000,
            particles: 1_000,
            particle_runs: 1_000,
            dt: 1e-3,
            horizon: 1.0,
            eps_clip: 1e-3,
            u_max: 100.0,
            level: crate::diagnostics::DEFAULT_LEVEL,
            eta: 1.0,
        }
    }
}

impl SuiteConfig {
    pub(crate) fn steps(&self, length: f64) -> usize {
        ((length / self.dt).round() as usize).max(1)
    }

    pub(crate) fn sub_seed(&self, label: u64) -> u64 {
        crate::rng::derive_seed(self.seed, label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Passes when `observed ≤ tolerance`.
    AtMost,
    /// Passes when `observed > tolerance`.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
    pub runtime_s: f64,
}

impl Check {
    pub fn at_most(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Self::new(name.into(), observed, tolerance, Relation::AtMost)
    }

    pub fn above(name: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self::new(name.into(), observed, threshold, Relation::Above)
    }

    fn new(name: String, observed: f64, tolerance: f64, relation: Relation) -> Self {
        let pass = match relation {
            Relation::AtMost => observed <= tolerance,
            Relation::Above => observed > tolerance,
        };
        Self { name, observed, tolerance, relation, pass, runtime_s: 0.0 }
    }

    pub fn line(&self) -> String {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::Above => ">",
        };
        format!(
            "{} {}: {:.6e} {op} {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.tolerance
        )
    }
}

/// Run `f`, stamping every check it returns with the elapsed wall time.
pub fn timed(f: impl FnOnce() -> Result<Vec<Check>>) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut checks = f()?;
    let elapsed = start.elapsed().as_secs_f64();
    for c in &mut checks {
        c.runtime_s = elapsed;
    }
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn new(command: impl Into<String>, seed: u64, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { command: command.into(), seed, checks, pass }
    }

    /// Recompute the global flag from the checks.
    pub fn is_consistent(&self) -> bool {
        self.pass == self.checks.iter().all(|c| c.pass)
    }
}

/// KS p-value, mean and variance agreement between two samples.
pub(crate) fn law_checks(prefix: &str, a: &[f64], b: &[f64], level: f64) -> Result<Vec<Check>> {
    let ks = ks_two_sample(a, b)?;
    let z_mean = MeanEstimate::of(a).z_against(&MeanEstimate::of(b));
    let z_var = MeanEstimate::variance_of(a).z_against(&MeanEstimate::variance_of(b));
    Ok(vec![
        Check::above(format!("{prefix} ks p-value"), ks.p_value, level),
        Check::at_most(format!("{prefix} mean |z|"), z_mean.abs(), 4.0),
        Check::at_most(format!("{prefix} variance |z|"), z_var.abs(), 4.0),
    ])
}

pub(crate) fn column(xs: &[DVector<f64>], i: usize) -> Vec<f64> {
    xs.iter().map(|x| x[i]).collect()
}

/// Raw moments `E[x₁^k]`, `k = 1..=orders`, of the first-coordinate
/// marginal of an exact base, by quadrature of its density.
pub fn marginal_moments(base: &TargetMeasure, orders: usize) -> Result<Vec<f64>> {
    let marginal = first_marginal(base)?;
    let (lo, hi) = marginal_range(&marginal);
    let dens = |x: f64| marginal.log_density(&DVector::from_element(1, x)).expect("exact").exp();
    Ok((1..=orders).map(|k| integrate(|x| x.powi(k as i32) * dens(x), lo, hi, 8001)).collect())
}

/// `P(a ≤ x₁ ≤ b)` under an exact base, by quadrature.
pub fn marginal_probability(base: &TargetMeasure, a: f64, b: f64) -> Result<f64> {
    let marginal = first_marginal(base)?;
    let dens = |x: f64| marginal.log_density(&DVector::from_element(1, x)).expect("exact").exp();
    Ok(integrate(dens, a, b, 8001))
}

fn first_marginal(base: &TargetMeasure) -> Result<TargetMeasure> {
    use crate::targets::{GaussianMeasure, GaussianMixture};
    let proj = |g: &GaussianMeasure| GaussianMeasure::scalar(g.mean()[0], g.cov()[(0, 0)]);
    Ok(match base {
        TargetMeasure::Gaussian(g) => proj(g)?.into(),
        TargetMeasure::Mixture(m) => GaussianMixture::new(
            m.components().iter().zip(m.weights()).map(|(g, w)| Ok((w, proj(g)?))).collect::<Result<Vec<_>>>()?,
        )?
        .into(),
        TargetMeasure::Potential(_) => {
            return Err(Error::Unsupported("marginal quadrature needs a Gaussian or mixture base".into()))
        }
    })
}

fn marginal_range(m: &TargetMeasure) -> (f64, f64) {
    let comps: Vec<(f64, f64)> = match m {
        TargetMeasure::Gaussian(g) => vec![(g.mean()[0], g.cov()[(0, 0)].sqrt())],
        TargetMeasure::Mixture(mx) => mx.components().iter().map(|g| (g.mean()[0], g.cov()[(0, 0)].sqrt())).collect(),
        TargetMeasure::Potential(_) => vec![(0.0, 1.0)],
    };
    let lo = comps.iter().map(|(m, s)| m - 14.0 * s).fold(f64::INFINITY, f64::min);
    let hi = comps.iter().map(|(m, s)| m + 14.0 * s).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{GaussianMeasure, GaussianMixture};

    #[test]
    fn check_relations() {
        assert!(Check::at_most("a", 1.0, 1.0).pass);
        assert!(!Check::above("b", 0.01, 0.01).pass);
        assert!(!Check::at_most("c", f64::NAN, 1.0).pass);
        let r = Report::new("x", 0, vec![Check::at_most("a", 0.0, 1.0), Check::above("b", 0.0, 1.0)]);
        assert!(!r.pass && r.is_consistent());
    }

    #[test]
    fn marginal_quadrature() {
        let g: TargetMeasure = GaussianMeasure::scalar(1.0, 4.0).unwrap().into();
        let m = marginal_moments(&g, 4).unwrap();
        let expect = [1.0, 5.0, 13.0, 73.0];
        for (a, b) in m.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
        let mix: TargetMeasure = GaussianMixture::symmetric_pair(DVector::from_vec(vec![2.0, 0.0]), 1.0).unwrap().into();
        assert!((marginal_probability(&mix, -100.0, 0.0).unwrap() - 0.5).abs() < 1e-12);
    }
}
