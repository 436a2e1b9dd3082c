//! Log-Sobolev schedule identities and the entropy-stability inequality
//! under the renormalization flow.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{Check, SuiteConfig};
use crate::diagnostics::quad::{integrate, simpson_rule};
use crate::diagnostics::MeanEstimate;
use crate::error::Result;
use crate::linalg::log_sum_exp;
use crate::polchinski::{fluctuation_measure, gaussian_variance_ratio, lsi_schedule, stability_factor};
use crate::rng::{self, standard_normal, Purpose};
use crate::targets::{GaussianMeasure, GaussianMixture, SamplerConfig, TargetMeasure};

/// `γ₁ = α`, the stability factor as `1 − exp(−∫_τ¹ γ)`, `Λ_τ = ∫_τ¹ λ`, and
/// equality of the Gaussian variance ratio along the top eigenvector.
pub fn lsi_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = rng::stream(cfg.sub_seed(40), 0, Purpose::Aux);
    let mut gamma_one: f64 = 0.0;
    for _ in 0..100 {
        let alpha = (10f64).powf(4.0 * rng.random::<f64>() - 2.0);
        let s = lsi_schedule(alpha)?;
        gamma_one = gamma_one.max((s.gamma(1.0) - alpha).abs() / alpha);
    }
    let (mut factor_err, mut lambda_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let alpha = 0.1 + 4.9 * rng.random::<f64>();
        let tau = 0.05 + 0.9 * rng.random::<f64>();
        let s = lsi_schedule(alpha)?;
        let int_gamma = integrate(|u| s.gamma(u), tau, 1.0, 20_001);
        factor_err = factor_err.max((stability_factor(alpha, tau)? - (1.0 - (-int_gamma).exp())).abs());
        let int_lambda = integrate(|u| s.lambda(u), tau, 1.0, 20_001);
        lambda_err = lambda_err.max((s.big_lambda(tau) - int_lambda).abs());
    }
    let mut ratio_err: f64 = 0.0;
    for _ in 0..20 {
        let d = 1 + rng.random_range(0..4);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let g = GaussianMeasure::new(DVector::zeros(d), &a * a.transpose() + DMatrix::identity(d, d) * 0.3)?;
        let top = g.eigenvectors().column(g.eigenvalues().imax()).into_owned();
        let alpha = 1.0 / g.cov_op_norm();
        let tau = 0.05 + 0.9 * rng.random::<f64>();
        ratio_err = ratio_err.max((gaussian_variance_ratio(&g, &top, tau)? - stability_factor(alpha, tau)?).abs());
    }
    Ok(vec![
        Check::at_most("gamma at tau=1 vs alpha, relative, 100 draws", gamma_one, 1e-12),
        Check::at_most("stability factor vs 1 - exp(-int gamma)", factor_err, 1e-6),
        Check::at_most("Lambda vs int lambda", lambda_err, 1e-6),
        Check::at_most("gaussian variance ratio vs factor at top eigenvector", ratio_err, 1e-10),
    ])
}

fn bump(x: f64) -> f64 {
    1.0 + 2.0 * (1.0 - x * x).max(0.0)
}

/// `Ent_μ f` for a density on `nodes`, given by unnormalized log-weights.
fn entropy_on_grid(log_w: &[f64], weights: &[f64], fs: &[f64]) -> f64 {
    let log_z = log_sum_exp(log_w.iter().zip(weights).map(|(l, w)| l + w.ln()));
    let (mut ef, mut eflogf) = (0.0, 0.0);
    for ((l, w), f) in log_w.iter().zip(weights).zip(fs) {
        let p = (l - log_z).exp() * w;
        ef += p * f;
        eflogf += p * f * f.ln();
    }
    eflogf - ef * ef.ln()
}

/// `E_{ν_τ}[Ent_{π_τ^v} f] ≥ factor(α_eff, τ) · Ent_π f` on a symmetric
/// mixture, with a compactly supported bump `f`.
pub fn entropy_stability_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mix = GaussianMixture::symmetric_pair(DVector::from_element(1, 0.5), 1.0)?;
    let alpha = mix.log_curvature_lower_bound().expect("log-concave mixture");
    let base: TargetMeasure = mix.into();
    let (nodes, weights) = simpson_rule(-12.0, 12.0, 4001);
    let fs: Vec<f64> = nodes.iter().map(|&x| bump(x)).collect();
    let point = |x: f64| DVector::from_element(1, x);
    let base_log: Vec<f64> = nodes.iter().map(|&x| base.log_density(&point(x)).expect("exact")).collect();
    let ent_pi = entropy_on_grid(&base_log, &weights, &fs);

    let n = (cfg.paths / 5).max(100);
    let mut rng = rng::stream(cfg.sub_seed(41), 0, Purpose::Sampler);
    let mut checks = Vec::new();
    for tau in [0.25, 0.5] {
        let ents = (0..n)
            .map(|_| {
                let x = base.sample_one(&mut rng, &SamplerConfig::default())?[0];
                let v = tau * x + (tau * (1.0 - tau)).sqrt() * standard_normal(&mut rng);
                let fl = fluctuation_measure(&base, tau, &point(v))?;
                let lw: Vec<f64> = nodes.iter().map(|&y| fl.unnormalized_log_density(&point(y))).collect();
                Ok(entropy_on_grid(&lw, &weights, &fs))
            })
            .collect::<Result<Vec<f64>>>()?;
        let est = MeanEstimate::of(&ents);
        let bound = stability_factor(alpha, tau)? * ent_pi;
        checks.push(Check::at_most(
            format!("entropy stability deficit on mixture, tau={tau}"),
            bound - est.mean,
            4.0 * est.stderr,
        ));
    }
    Ok(checks)
}
