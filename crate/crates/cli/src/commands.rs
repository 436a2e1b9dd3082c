//! One function per subcommand. Each writes its data files into the output
//! directory and returns the checks it ran.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sloc_core::bridge::{gibbs_reference, sinkhorn, DiscreteMeasure, SinkhornConfig};
use sloc_core::diffusion::{backward_grid, backward_sde_run};
use sloc_core::io;
use sloc_core::localize::{channel_path, tilt_sde_run};
use sloc_core::polchinski::{lsi_schedule, polchinski_run};
use sloc_core::rgd::{
    chain_law_propagate, entropic_stability_probe, kl_contraction_bound, lsi_lower_bound, rgd_chain, RgdConfig,
};
use sloc_core::rng::{self, Purpose};
use sloc_core::sde::{try_run_ensemble, wiener_increments, TimeGrid};
use sloc_core::suites::{self, timed, Check, SuiteConfig};
use sloc_core::targets::{GaussianMeasure, MomentBudget, SamplerConfig, TargetMeasure};

use crate::config::{ConfigErrors, ExperimentConfig, Perspective};

pub struct RunContext<'a> {
    pub config: &'a ExperimentConfig,
    pub target: TargetMeasure,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunContext<'_> {
    fn suite(&self) -> SuiteConfig {
        self.config.suite_config(self.seed)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }
}

pub fn simulate(cx: &RunContext) -> Result<Vec<Check>> {
    let c = cx.config;
    let base = &cx.target;
    let d = base.dim();
    let budget = MomentBudget::default();
    let keep = c.trajectories.min(c.paths) as u64;
    let steps = ((c.horizon / c.dt).round() as usize).max(1);
    let terminal: Vec<(u64, f64, DVector<f64>)> = match c.perspective.unwrap_or(Perspective::Tilt) {
        Perspective::Tilt => {
            let grid = TimeGrid::uniform(0.0, c.horizon, steps)?;
            let runs = try_run_ensemble(c.paths, |id| {
                let w = wiener_increments(&grid, d, cx.seed, id)?;
                tilt_sde_run(base, &grid, &w, &budget)
            })?;
            let kept: Vec<_> = runs.iter().take(keep as usize).cloned().enumerate().map(|(i, r)| (i as u64, r)).collect();
            io::write_trajectories_csv(cx.create("trajectories.csv")?, &kept)?;
            runs.into_iter().enumerate().map(|(i, r)| (i as u64, c.horizon, r.last().expect("non-empty").c.clone())).collect()
        }
        Perspective::Channel => {
            let grid = TimeGrid::uniform(0.0, c.horizon, steps)?;
            let sampler = SamplerConfig::default();
            let paths = try_run_ensemble(c.paths, |id| Ok(channel_path(base, &grid, cx.seed, id, &sampler)?.1))?;
            io::write_paths_csv(cx.create("trajectories.csv")?, &paths[..keep as usize])?;
            paths.iter().map(|p| (p.stream_id, c.horizon, p.terminal())).collect()
        }
        Perspective::Diffusion => {
            let grid = backward_grid(c.eps_clip, c.u_max, steps)?;
            let runs = try_run_ensemble(c.paths, |id| {
                let w = wiener_increments(&grid, d, cx.seed, id)?;
                backward_sde_run(base, &grid, &w, &budget)
            })?;
            let kept: Vec<_> = runs.iter().take(keep as usize).cloned().enumerate().map(|(i, r)| (i as u64, r)).collect();
            io::write_backward_csv(cx.create("trajectories.csv")?, &kept)?;
            runs.into_iter().enumerate().map(|(i, r)| (i as u64, c.u_max, r.last().expect("non-empty").x.clone())).collect()
        }
        p @ (Perspective::Polchinski | Perspective::Follmer) => {
            let end = if p == Perspective::Polchinski { c.horizon / (1.0 + c.horizon) } else { 1.0 - c.eps_clip };
            let grid = TimeGrid::uniform(0.0, end, ((end / c.dt).round() as usize).max(1))?;
            let paths = try_run_ensemble(c.paths, |id| {
                let w = wiener_increments(&grid, d, cx.seed, id)?;
                polchinski_run(base, &grid, &w, &budget)
            })?;
            io::write_paths_csv(cx.create("trajectories.csv")?, &paths[..keep as usize])?;
            paths.iter().map(|p| (p.stream_id, end, p.terminal())).collect()
        }
        Perspective::Particle => {
            return Err(ConfigErrors(vec!["simulate supports tilt, channel, diffusion, polchinski and follmer".into()]).into())
        }
    };
    io::write_points_csv(cx.create("terminal.csv")?, &terminal)?;
    Ok(Vec::new())
}

pub fn equiv(cx: &RunContext) -> Result<Vec<Check>> {
    let cfg = cx.suite();
    let base = &cx.target;
    let wanted = |p: Perspective| match cx.config.perspective {
        None | Some(Perspective::Tilt) => !p.requires_exact() || base.is_exact(),
        Some(q) => q == p,
    };
    let mut checks = Vec::new();
    if wanted(Perspective::Channel) {
        checks.extend(timed(|| suites::channel_suite(base, &cfg))?);
    }
    if wanted(Perspective::Particle) {
        checks.extend(timed(|| suites::particle_suite(base, &cfg))?);
    }
    if wanted(Perspective::Diffusion) {
        checks.extend(timed(|| suites::diffusion_suite(base, &cfg))?);
        checks.extend(timed(|| suites::tweedie_suite(&cfg))?);
    }
    if wanted(Perspective::Polchinski) {
        checks.extend(timed(|| suites::polchinski_suite(base, &cfg))?);
        checks.extend(timed(|| suites::polchinski_equation_suite(&cfg))?);
    }
    if wanted(Perspective::Follmer) {
        checks.extend(timed(|| suites::follmer_suite(base, &cfg))?);
    }
    Ok(checks)
}

pub fn rgd(cx: &RunContext) -> Result<Vec<Check>> {
    let c = cx.config;
    let cfg = cx.suite();
    let target = &cx.target;
    let d = target.dim();
    let mut checks = timed(|| suites::contraction_suite(&cfg))?;
    checks.extend(timed(|| suites::kernel_identity_suite(std::slice::from_ref(target), &cfg))?);
    checks.extend(timed(|| suites::stability_suite(&cfg))?);
    checks.extend(timed(|| suites::anisotropic_suite(&cfg))?);

    // One chain started from a draw of N(3·1, I), with the exact law's KL for
    // Gaussian targets.
    let init = GaussianMeasure::isotropic(DVector::from_element(d, 3.0), 1.0)?;
    let x0 = init.sample(&mut rng::stream(cx.seed, 0, Purpose::Initial));
    let chain = rgd_chain(&x0, &RgdConfig::new(target.clone(), c.eta, c.rgd_steps)?, cx.seed, 0)?;
    let kl = match target {
        TargetMeasure::Gaussian(g) => {
            Some(chain_law_propagate(&init, g, c.eta, c.rgd_steps)?.iter().map(|l| l.kl).collect::<Vec<_>>())
        }
        _ => None,
    };
    let states: Vec<Vec<f64>> = chain.iter().map(|x| x.iter().copied().collect()).collect();
    io::write_chain_csv(cx.create("chain.csv")?, &states, kl.as_deref())?;

    let alpha = match target {
        TargetMeasure::Gaussian(g) => Some(g.cov_op_norm()),
        TargetMeasure::Mixture(m) => m.tilt_covariance_bound(),
        TargetMeasure::Potential(_) => None,
    };
    if let Some(alpha) = alpha {
        let mut r = rng::stream(cx.seed, 1, Purpose::Aux);
        let probes: Vec<DVector<f64>> = (0..100).map(|_| rng::normal_vector(&mut r, d) * 2.0).collect();
        let report = entropic_stability_probe(target, &probes, alpha)?;
        checks.push(Check::at_most(
            format!("target entropic stability failures at alpha={alpha}"),
            report.probes.iter().filter(|p| !p.pass).count() as f64,
            0.0,
        ));
        io::write_json(cx.create("stability.json")?, &report)?;
    }
    Ok(checks)
}

pub fn bridge(cx: &RunContext) -> Result<Vec<Check>> {
    let cfg = cx.suite();
    let target = &cx.target;
    let mut checks = timed(|| suites::eot_ssb_suite(&cfg))?;
    checks.extend(timed(|| suites::girsanov_suite(&cfg))?);
    checks.extend(timed(|| suites::follmer_suite(target, &cfg))?);

    // Bridge between 8 standard normal atoms and 8 target atoms.
    let d = target.dim();
    let mut r = rng::stream(cx.seed, 0, Purpose::Aux);
    let src: Vec<DVector<f64>> = (0..8).map(|_| rng::normal_vector(&mut r, d)).collect();
    let dst = (0..8).map(|_| target.sample_one(&mut r, &SamplerConfig::default())).collect::<sloc_core::Result<Vec<_>>>()?;
    let rows = |xs: &[DVector<f64>]| DMatrix::from_fn(xs.len(), d, |i, j| xs[i][j]);
    let mu = DiscreteMeasure::uniform(rows(&src))?;
    let pi = DiscreteMeasure::uniform(rows(&dst))?;
    let res = sinkhorn(&mu, &pi, &gibbs_reference(&mu, &pi)?, &SinkhornConfig::default())?;
    io::write_coupling_csv(cx.create("coupling.csv")?, &res.coupling.matrix())?;
    io::write_sinkhorn_trace_json(cx.create("sinkhorn_trace.json")?, &res.trace)?;
    checks.push(Check::at_most("sampled bridge marginal residual", res.residual, 1e-8));
    Ok(checks)
}

#[derive(Serialize)]
struct Bounds {
    alpha: f64,
    eta: f64,
    gamma_at_one: f64,
    lsi_lower_bound: f64,
    kl_contraction_bound: f64,
}

pub fn lsi(cx: &RunContext) -> Result<Vec<Check>> {
    let c = cx.config;
    let cfg = cx.suite();
    let schedule = lsi_schedule(c.alpha)?;
    let taus: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
    io::write_schedule_csv(cx.create("schedule.csv")?, &schedule.table(&taus)?)?;
    let bounds = Bounds {
        alpha: c.alpha,
        eta: c.eta,
        gamma_at_one: schedule.gamma(1.0),
        lsi_lower_bound: lsi_lower_bound(c.alpha, c.eta)?,
        kl_contraction_bound: kl_contraction_bound(c.alpha, c.eta),
    };
    io::write_json(cx.create("bounds.json")?, &bounds)?;
    let mut checks = vec![Check::at_most(
        "schedule gamma at tau=1 vs alpha, relative",
        (bounds.gamma_at_one - c.alpha).abs() / c.alpha,
        1e-12,
    )];
    checks.extend(timed(|| suites::lsi_suite(&cfg))?);
    checks.extend(timed(|| suites::entropy_stability_suite(&cfg))?);
    Ok(checks)
}

/// Reports found at `inputs`: files as given, directories via `report.json`.
pub fn collect_reports(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, suites::Report)>> {
    let mut out = Vec::new();
    for p in inputs {
        let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
        let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let report: suites::Report =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
        if !report.is_consistent() {
            bail!("{}: global pass flag disagrees with its checks", file.display());
        }
        out.push((file, report));
    }
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
