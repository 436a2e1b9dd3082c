//! Agreement of the tilt process with the particle, channel, diffusion and
//! Polchinski constructions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{column, law_checks, marginal_probability, Check, SuiteConfig};
use crate::diagnostics::{quad::integrate, MeanEstimate};
use crate::diffusion::{backward_sde_run, tweedie_score, NoisyChannelSpec};
use crate::error::Result;
use crate::localize::{channel_path, tilt_sde_run, tilt_sde_terminal, ParticleConfig, ParticleSystem};
use crate::polchinski::{polchinski_residual, polchinski_run};
use crate::rng::{self, Purpose};
use crate::sde::{try_run_ensemble, wiener_increments, TimeGrid};
use crate::targets::{GaussianMeasure, GaussianMixture, MomentBudget, SamplerConfig, TargetMeasure};

fn tilt_terminals(base: &TargetMeasure, grid: &TimeGrid, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let budget = MomentBudget::default();
    try_run_ensemble(n, |id| {
        let w = wiener_increments(grid, base.dim(), seed, id)?;
        tilt_sde_terminal(base, grid, &w, &budget)
    })
}

/// Tilt-SDE states at the grid indices `at`, for `n` paths.
fn tilt_states_at(base: &TargetMeasure, grid: &TimeGrid, at: &[usize], n: usize, seed: u64) -> Result<Vec<Vec<DVector<f64>>>> {
    let budget = MomentBudget::default();
    try_run_ensemble(n, |id| {
        let w = wiener_increments(grid, base.dim(), seed, id)?;
        let run = tilt_sde_run(base, grid, &w, &budget)?;
        Ok(at.iter().map(|&k| run[k].c.clone()).collect())
    })
}

/// Known `(mean, variance)` of `c_t = t·x + B_t` per coordinate, for
/// Gaussian bases.
fn gaussian_channel_moments(base: &TargetMeasure, t: f64) -> Option<Vec<(f64, f64)>> {
    match base {
        TargetMeasure::Gaussian(g) => Some(
            (0..g.dim()).map(|i| (t * g.mean()[i], t * t * g.cov()[(i, i)] + t)).collect(),
        ),
        _ => None,
    }
}

fn closed_form_checks(prefix: &str, xs: &[f64], mean: f64, var: f64) -> Vec<Check> {
    vec![
        Check::at_most(format!("{prefix} mean vs closed form |z|"), MeanEstimate::of(xs).z_against_value(mean).abs(), 4.0),
        Check::at_most(
            format!("{prefix} variance vs closed form |z|"),
            MeanEstimate::variance_of(xs).z_against_value(var).abs(),
            4.0,
        ),
    ]
}

/// Tilt SDE against the Gaussian channel at the horizon.
pub fn channel_suite(base: &TargetMeasure, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let t = cfg.horizon;
    let grid = TimeGrid::uniform(0.0, t, cfg.steps(t))?;
    let sde = tilt_terminals(base, &grid, cfg.paths, cfg.sub_seed(1))?;
    let seed_ch = cfg.sub_seed(2);
    let sampler = SamplerConfig::default();
    let chan = try_run_ensemble(cfg.paths, |id| Ok(channel_path(base, &grid, seed_ch, id, &sampler)?.1.terminal()))?;
    let mut checks = Vec::new();
    for i in 0..base.dim() {
        let (a, b) = (column(&sde, i), column(&chan, i));
        let prefix = format!("tilt sde vs channel c_T[{}]", i + 1);
        checks.extend(law_checks(&prefix, &a, &b, cfg.level)?);
        if let Some(m) = gaussian_channel_moments(base, t) {
            checks.extend(closed_form_checks(&format!("tilt sde c_T[{}]", i + 1), &a, m[i].0, m[i].1));
        }
    }
    Ok(checks)
}

/// Weighted particles against the closed-form tilt mean on shared noise,
/// plus the martingale checks on box probability and total mass.
pub fn particle_suite(base: &TargetMeasure, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let t = 0.5 * cfg.horizon;
    let grid = TimeGrid::uniform(0.0, t, cfg.steps(t))?;
    let budget = MomentBudget::default();
    let pcfg = ParticleConfig::new(cfg.particles);
    let n = cfg.particles as f64;
    let seed = cfg.sub_seed(3);
    let shared = 20;
    let errs = try_run_ensemble(shared, |id| {
        let w = wiener_increments(&grid, base.dim(), seed, id)?;
        let states = tilt_sde_run(base, &grid, &w, &budget)?;
        let mut sys = ParticleSystem::new(base, &pcfg, seed, id)?;
        for k in 0..grid.steps() {
            sys.step(grid.dt(k), w.increment(k))?;
        }
        Ok((sys.cloud().weighted_mean() - &states.last().expect("non-empty").mean).amax() * n.sqrt())
    })?;
    let worst = errs.into_iter().fold(0.0, f64::max);
    let mut checks = vec![Check::at_most("particle mean vs tilt mean, max sqrt(n)|error|", worst, 5.0)];

    let seed_m = cfg.sub_seed(4);
    let center = base_center(base);
    let (lo, hi) = (center - 0.5, center + 1.0);
    let runs = try_run_ensemble(cfg.particle_runs, |id| {
        let w = wiener_increments(&grid, base.dim(), seed_m, id)?;
        let mut sys = ParticleSystem::new(base, &pcfg, seed_m, id)?;
        for k in 0..grid.steps() {
            sys.step(grid.dt(k), w.increment(k))?;
        }
        let c = sys.cloud();
        Ok((c.probability(|x| (lo..=hi).contains(&x[0])), c.log_mass.exp()))
    })?;
    let mass: Vec<f64> = runs.iter().map(|r| r.1).collect();
    checks.push(Check::at_most("particle mass E[M_T] = 1 |z|", MeanEstimate::of(&mass).z_against_value(1.0).abs(), 4.0));
    if base.is_exact() {
        let reference = marginal_probability(base, lo, hi)?;
        let probs: Vec<f64> = runs.iter().map(|r| r.0).collect();
        checks.push(Check::at_most(
            "particle box probability martingale |z|",
            MeanEstimate::of(&probs).z_against_value(reference).abs(),
            4.0,
        ));
    }
    Ok(checks)
}

fn base_center(base: &TargetMeasure) -> f64 {
    match base {
        TargetMeasure::Gaussian(g) => g.mean()[0],
        TargetMeasure::Mixture(m) => m.mean()[0],
        TargetMeasure::Potential(_) => 0.0,
    }
}

/// Geometric grid on `[start, end]` passing through every point of `through`,
/// with about `per_decade` steps per factor of ten.
pub fn geometric_grid_through(start: f64, end: f64, through: &[f64], per_decade: usize) -> Result<TimeGrid> {
    let mut knots: Vec<f64> = std::iter::once(start)
        .chain(through.iter().copied().filter(|u| *u > start && *u < end))
        .chain(std::iter::once(end))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut times = vec![start];
    for w in knots.windows(2) {
        let steps = (((w[1] / w[0]).log10() * per_decade as f64).ceil() as usize).max(1);
        let seg = TimeGrid::geometric(w[0], w[1], steps)?;
        times.extend_from_slice(&seg.times()[1..]);
    }
    TimeGrid::new(times)
}

/// Rescaled backward diffusion against the tilt process at `u ∈ {½T, T}`,
/// and the backward terminal law against the base.
pub fn diffusion_suite(base: &TargetMeasure, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let evals = [0.5 * cfg.horizon, cfg.horizon];
    let u_grid = geometric_grid_through(cfg.eps_clip, cfg.u_max, &evals, 200)?;
    let idx: Vec<usize> = evals.iter().map(|u| u_grid.index_of(*u)).collect();
    let budget = MomentBudget::default();
    let seed_b = cfg.sub_seed(5);
    let back = try_run_ensemble(cfg.paths, |id| {
        let w = wiener_increments(&u_grid, base.dim(), seed_b, id)?;
        let run = backward_sde_run(base, &u_grid, &w, &budget)?;
        let mut out: Vec<DVector<f64>> = idx.iter().map(|&k| crate::diffusion::rescale_to_tilt(&run[k]).1).collect();
        out.push(run.last().expect("non-empty").x.clone());
        Ok(out)
    })?;
    let t_grid = TimeGrid::uniform(0.0, cfg.horizon, cfg.steps(cfg.horizon))?;
    let t_idx: Vec<usize> = evals.iter().map(|u| t_grid.index_of(*u)).collect();
    let sde = tilt_states_at(base, &t_grid, &t_idx, cfg.paths, cfg.sub_seed(6))?;
    let mut checks = Vec::new();
    for (j, u) in evals.iter().enumerate() {
        let b: Vec<DVector<f64>> = back.iter().map(|r| r[j].clone()).collect();
        let s: Vec<DVector<f64>> = sde.iter().map(|r| r[j].clone()).collect();
        for i in 0..base.dim() {
            let (bi, si) = (column(&b, i), column(&s, i));
            checks.extend(law_checks(&format!("rescaled backward vs tilt sde at u={u} [{}]", i + 1), &bi, &si, cfg.level)?);
            if let Some(m) = gaussian_channel_moments(base, *u) {
                checks.extend(closed_form_checks(&format!("rescaled backward at u={u} [{}]", i + 1), &bi, m[i].0, m[i].1));
            }
        }
    }
    if base.is_exact() {
        let term: Vec<DVector<f64>> = back.iter().map(|r| r[evals.len()].clone()).collect();
        let mut rng = rng::stream(cfg.sub_seed(7), 0, Purpose::Sampler);
        let exact: Vec<DVector<f64>> =
            (0..cfg.paths).map(|_| base.sample_one(&mut rng, &SamplerConfig::default())).collect::<Result<_>>()?;
        for i in 0..base.dim() {
            let ks = crate::diagnostics::ks_two_sample(&column(&term, i), &column(&exact, i))?;
            checks.push(Check::above(format!("backward terminal vs base [{}] ks p-value", i + 1), ks.p_value, cfg.level));
        }
    }
    Ok(checks)
}

fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.3
}

fn random_base<R: Rng>(rng: &mut R, d: usize, mixture: bool) -> Result<TargetMeasure> {
    let gauss = |rng: &mut R| {
        let mean = DVector::from_fn(d, |_, _| 3.0 * (rng.random::<f64>() - 0.5));
        GaussianMeasure::new(mean, random_spd(rng, d))
    };
    Ok(if mixture {
        let w = 0.2 + 0.6 * rng.random::<f64>();
        GaussianMixture::new(vec![(w, gauss(rng)?), (1.0 - w, gauss(rng)?)])?.into()
    } else {
        gauss(rng)?.into()
    })
}

/// Largest relative error of Tweedie scores against central differences of
/// the log marginal (quadrature in 1-d, closed-form density above).
pub fn tweedie_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = rng::stream(cfg.sub_seed(8), 0, Purpose::Aux);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for probe in 0..50 {
        let d = 1 + probe % 3;
        let base = random_base(&mut rng, d, probe % 2 == 1)?;
        let scale = 0.2 + 0.8 * rng.random::<f64>();
        let spec = NoisyChannelSpec::new(scale, 1.0 - scale * scale + 0.05)?;
        let y = DVector::from_fn(d, |_, _| 3.0 * (rng.random::<f64>() - 0.5));
        let score = tweedie_score(&base, &spec, &y, &MomentBudget::default())?;
        let log_nu = |y: &DVector<f64>| -> Result<f64> {
            if d == 1 {
                Ok(quadrature_log_marginal(&base, &spec, y[0]))
            } else {
                spec.log_marginal(&base, y)
            }
        };
        let mut fd = DVector::zeros(d);
        for i in 0..d {
            let (mut yp, mut ym) = (y.clone(), y.clone());
            yp[i] += h;
            ym[i] -= h;
            fd[i] = (log_nu(&yp)? - log_nu(&ym)?) / (2.0 * h);
        }
        worst = worst.max((score - &fd).norm() / (fd.norm() + 1e-6));
    }
    Ok(vec![Check::at_most("tweedie score vs finite differences, max relative error", worst, 1e-3)])
}

fn quadrature_log_marginal(base: &TargetMeasure, spec: &NoisyChannelSpec, y: f64) -> f64 {
    let f = |x: f64| {
        let lp = base.log_density(&DVector::from_element(1, x)).expect("exact");
        let r = y - spec.scale * x;
        (lp - r * r / (2.0 * spec.noise_var)).exp()
    };
    (integrate(f, -30.0, 30.0, 12001) / (2.0 * std::f64::consts::PI * spec.noise_var).sqrt()).ln()
}

/// Polchinski flow at `τ = T/(1+T)`, rescaled by `1/(1−τ)`, against the
/// tilt process at `T`.
pub fn polchinski_suite(base: &TargetMeasure, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let t = cfg.horizon;
    let tau = t / (1.0 + t);
    let tau_grid = TimeGrid::uniform(0.0, tau, cfg.steps(tau))?;
    let budget = MomentBudget::default();
    let seed_p = cfg.sub_seed(9);
    let flow = try_run_ensemble(cfg.paths, |id| {
        let w = wiener_increments(&tau_grid, base.dim(), seed_p, id)?;
        Ok(polchinski_run(base, &tau_grid, &w, &budget)?.terminal() / (1.0 - tau))
    })?;
    let grid = TimeGrid::uniform(0.0, t, cfg.steps(t))?;
    let sde = tilt_terminals(base, &grid, cfg.paths, cfg.sub_seed(10))?;
    let mut checks = Vec::new();
    for i in 0..base.dim() {
        checks.extend(law_checks(
            &format!("polchinski v_tau/(1-tau) vs tilt sde c_T [{}]", i + 1),
            &column(&flow, i),
            &column(&sde, i),
            cfg.level,
        )?);
    }
    Ok(checks)
}

/// Finite-difference residual of the Polchinski equation on random
/// two-component mixtures in 1-d.
pub fn polchinski_equation_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = rng::stream(cfg.sub_seed(11), 0, Purpose::Aux);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let base = random_base(&mut rng, 1, true)?;
        let tau = 0.05 + 0.9 * rng.random::<f64>();
        let x = DVector::from_element(1, 6.0 * (rng.random::<f64>() - 0.5));
        let (r, scale) = polchinski_residual(&base, tau, &x, 1e-3, &MomentBudget::default())?;
        worst = worst.max(r.abs() / scale.max(1e-12));
    }
    Ok(vec![Check::at_most("polchinski equation residual, max relative", worst, 1e-3)])
}
