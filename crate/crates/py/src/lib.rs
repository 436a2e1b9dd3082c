//! Python module `sloc`: targets, the tilt process and its equivalent
//! constructions, bridges, the proximal sampler and the verification suites.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sloc_core::bridge::{self as br, DiscreteMeasure, SinkhornConfig};
use sloc_core::diffusion::{self as diff, NoisyChannelSpec};
use sloc_core::localize;
use sloc_core::polchinski;
use sloc_core::rgd::{self, RgdConfig};
use sloc_core::rng::{self as srng, Purpose};
use sloc_core::sde::{wiener_increments, TimeGrid};
use sloc_core::suites::{self, SuiteConfig};
use sloc_core::targets::{
    self as tg, BuiltinPotential, GaussianMeasure, GaussianMixture, GenericPotential, MomentBudget, Reg,
    SamplerConfig, TargetMeasure, TargetSpec,
};

fn err(e: sloc_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vector(x: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(x)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    sloc_core::linalg::matrix_from_rows(&rows).map_err(err)
}

fn rows(xs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| x.iter().copied().collect()).collect()
}

fn grid(start: f64, end: f64, steps: usize) -> PyResult<TimeGrid> {
    TimeGrid::uniform(start, end, steps).map_err(err)
}

/// A base measure: Gaussian, Gaussian mixture or a built-in potential.
#[pyclass(frozen, module = "sloc")]
pub struct Target {
    inner: TargetMeasure,
}

#[pymethods]
impl Target {
    #[staticmethod]
    fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let g = GaussianMeasure::new(vector(mean), matrix(cov)?).map_err(err)?;
        Ok(Self { inner: g.into() })
    }

    #[staticmethod]
    fn mixture(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        if weights.len() != means.len() || weights.len() != covs.len() {
            return Err(PyValueError::new_err("weights, means and covs must have equal length"));
        }
        let comps = weights
            .into_iter()
            .zip(means)
            .zip(covs)
            .map(|((w, m), c)| Ok((w, GaussianMeasure::new(vector(m), matrix(c)?).map_err(err)?)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: GaussianMixture::new(comps).map_err(err)?.into() })
    }

    #[staticmethod]
    #[pyo3(signature = (name, dim, param=None))]
    fn potential(name: &str, dim: usize, param: Option<f64>) -> PyResult<Self> {
        let p = BuiltinPotential::by_name(name, dim, param).map_err(err)?;
        Ok(Self { inner: GenericPotential::builtin(p).into() })
    }

    /// Build from the JSON target description used by the CLI.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = TargetSpec::from_json(text).map_err(err)?;
        Ok(Self { inner: spec.build().map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    #[getter]
    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }

    /// Normalized log-density; `None` for potentials.
    fn log_density(&self, x: Vec<f64>) -> Option<f64> {
        self.inner.log_density(&vector(x))
    }

    #[pyo3(signature = (n, seed, stream_id=0))]
    fn sample(&self, n: usize, seed: u64, stream_id: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = srng::stream(seed, stream_id, Purpose::Sampler);
        let cfg = SamplerConfig::default();
        let xs = (0..n).map(|_| self.inner.sample_one(&mut rng, &cfg)).collect::<sloc_core::Result<Vec<_>>>().map_err(err)?;
        Ok(rows(&xs))
    }

    /// Mean of the tilt `π(x) exp(⟨c,x⟩ − t‖x‖²/2)`.
    fn tilt_mean(&self, c: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let m = tg::tilt(&self.inner, vector(c), Reg::Scalar(t))
            .and_then(|m| m.mean(&MomentBudget::default()))
            .map_err(err)?;
        Ok(m.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Target(kind={:?}, dim={})", self.inner.kind(), self.inner.dim())
    }
}

/// Tilt-process states `(t, c_t, m_t)` on a uniform grid over `[0, horizon]`.
#[pyfunction]
#[pyo3(signature = (target, horizon, steps, seed, stream_id=0))]
fn tilt_sde(target: &Target, horizon: f64, steps: usize, seed: u64, stream_id: u64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let g = grid(0.0, horizon, steps)?;
    let w = wiener_increments(&g, target.inner.dim(), seed, stream_id).map_err(err)?;
    let run = localize::tilt_sde_run(&target.inner, &g, &w, &MomentBudget::default()).map_err(err)?;
    let t = run.iter().map(|s| s.t).collect();
    let c: Vec<_> = run.iter().map(|s| s.c.clone()).collect();
    let m: Vec<_> = run.iter().map(|s| s.mean.clone()).collect();
    Ok((t, rows(&c), rows(&m)))
}

/// Channel `c_t = t·x + B_t`; returns the hidden `x` and the path.
#[pyfunction]
#[pyo3(signature = (target, horizon, steps, seed, stream_id=0))]
fn channel_path(target: &Target, horizon: f64, steps: usize, seed: u64, stream_id: u64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let g = grid(0.0, horizon, steps)?;
    let (x, p) = localize::channel_path(&target.inner, &g, seed, stream_id, &SamplerConfig::default()).map_err(err)?;
    let states: Vec<_> = (0..p.len()).map(|k| p.state(k)).collect();
    Ok((x.iter().copied().collect(), rows(&states)))
}

/// Backward diffusion on a geometric grid over `[eps_clip, u_max]`; returns
/// `(u, x)`.
#[pyfunction]
#[pyo3(signature = (target, eps_clip, u_max, steps, seed, stream_id=0))]
fn backward_sde(target: &Target, eps_clip: f64, u_max: f64, steps: usize, seed: u64, stream_id: u64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let g = diff::backward_grid(eps_clip, u_max, steps).map_err(err)?;
    let w = wiener_increments(&g, target.inner.dim(), seed, stream_id).map_err(err)?;
    let run = diff::backward_sde_run(&target.inner, &g, &w, &MomentBudget::default()).map_err(err)?;
    let xs: Vec<_> = run.iter().map(|s| s.x.clone()).collect();
    Ok((run.iter().map(|s| s.u).collect(), rows(&xs)))
}

/// Score of `y = scale·x + N(0, noise_var·I)` by Tweedie's formula.
#[pyfunction]
fn tweedie_score(target: &Target, scale: f64, noise_var: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
    let spec = NoisyChannelSpec::new(scale, noise_var).map_err(err)?;
    let s = diff::tweedie_score(&target.inner, &spec, &vector(y), &MomentBudget::default()).map_err(err)?;
    Ok(s.iter().copied().collect())
}

/// Renormalization flow `v_τ` on a uniform grid over `[0, tau_end]`.
#[pyfunction]
#[pyo3(signature = (target, tau_end, steps, seed, stream_id=0))]
fn polchinski_run(target: &Target, tau_end: f64, steps: usize, seed: u64, stream_id: u64) -> PyResult<Vec<Vec<f64>>> {
    let g = grid(0.0, tau_end, steps)?;
    let w = wiener_increments(&g, target.inner.dim(), seed, stream_id).map_err(err)?;
    let p = polchinski::polchinski_run(&target.inner, &g, &w, &MomentBudget::default()).map_err(err)?;
    Ok(rows(&(0..p.len()).map(|k| p.state(k)).collect::<Vec<_>>()))
}

/// `(V_τ(x), ∇V_τ(x))`.
#[pyfunction]
fn renorm_potential(target: &Target, tau: f64, x: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
    let (v, g) = polchinski::renorm_potential(&target.inner, tau, &vector(x), &MomentBudget::default()).map_err(err)?;
    Ok((v, g.iter().copied().collect()))
}

/// Föllmer energy `½E∫‖drift‖²` over `[0, 1 − eps_clip]`; `(energy, stderr)`.
#[pyfunction]
#[pyo3(signature = (target, n_paths, seed, dt=1e-3, eps_clip=1e-3))]
fn girsanov_energy(target: &Target, n_paths: usize, seed: u64, dt: f64, eps_clip: f64) -> PyResult<(f64, f64)> {
    let end = 1.0 - eps_clip;
    let g = grid(0.0, end, ((end / dt).round() as usize).max(1))?;
    let drift = br::FollmerDrift::new(&target.inner, MomentBudget::default());
    let e = br::girsanov_energy(&drift, &g, n_paths, seed).map_err(err)?;
    Ok((e.energy, e.stderr))
}

/// Result of a Sinkhorn solve with the Gibbs reference coupling.
#[pyclass(frozen, get_all, module = "sloc")]
pub struct Bridge {
    coupling: Vec<Vec<f64>>,
    iterations: usize,
    residual: f64,
    converged: bool,
    ssb: f64,
    eot: f64,
}

/// Static Schrödinger bridge between two weighted point clouds.
#[pyfunction]
#[pyo3(signature = (mu_points, mu_weights, pi_points, pi_weights, tol=1e-10, max_iter=10_000))]
fn sinkhorn(
    mu_points: Vec<Vec<f64>>,
    mu_weights: Vec<f64>,
    pi_points: Vec<Vec<f64>>,
    pi_weights: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bridge> {
    let mu = DiscreteMeasure::new(matrix(mu_points)?, mu_weights).map_err(err)?;
    let pi = DiscreteMeasure::new(matrix(pi_points)?, pi_weights).map_err(err)?;
    let r = br::gibbs_reference(&mu, &pi).map_err(err)?;
    let res = br::sinkhorn(&mu, &pi, &r, &SinkhornConfig { tol, max_iter }).map_err(err)?;
    let gamma = res.coupling.matrix();
    let obj = br::objective_pair(&gamma, &mu, &pi, &r).map_err(err)?;
    Ok(Bridge {
        coupling: sloc_core::linalg::matrix_to_rows(&gamma),
        iterations: res.iterations,
        residual: res.residual,
        converged: res.converged,
        ssb: obj.ssb,
        eot: obj.eot,
    })
}

/// Proximal-sampler chain of `steps` transitions from `x0`, start included.
#[pyfunction]
#[pyo3(signature = (target, x0, eta, steps, seed, stream_id=0))]
fn rgd_chain(target: &Target, x0: Vec<f64>, eta: f64, steps: usize, seed: u64, stream_id: u64) -> PyResult<Vec<Vec<f64>>> {
    let cfg = RgdConfig::new(target.inner.clone(), eta, steps).map_err(err)?;
    Ok(rows(&rgd::rgd_chain(&vector(x0), &cfg, seed, stream_id).map_err(err)?))
}

/// KL to a Gaussian target of the exact chain law after `0..=k` steps.
#[pyfunction]
fn chain_law_kl(init: &Target, target: &Target, eta: f64, k: usize) -> PyResult<Vec<f64>> {
    let (TargetMeasure::Gaussian(a), TargetMeasure::Gaussian(b)) = (&init.inner, &target.inner) else {
        return Err(PyValueError::new_err("chain laws are exact only for Gaussian start and target"));
    };
    Ok(rgd::chain_law_propagate(a, b, eta, k).map_err(err)?.iter().map(|l| l.kl).collect())
}

#[pyfunction]
fn lsi_lower_bound(alpha: f64, eta: f64) -> PyResult<f64> {
    rgd::lsi_lower_bound(alpha, eta).map_err(err)
}

#[pyfunction]
fn stability_factor(alpha: f64, tau: f64) -> PyResult<f64> {
    polchinski::stability_factor(alpha, tau).map_err(err)
}

/// Rows `(tau, lambda, Lambda, gamma, factor)` of the curvature schedule.
#[pyfunction]
fn lsi_schedule(alpha: f64, taus: Vec<f64>) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let table = polchinski::lsi_schedule(alpha).and_then(|s| s.table(&taus)).map_err(err)?;
    Ok(table.iter().map(|r| (r.tau, r.lambda, r.big_lambda, r.gamma, r.factor)).collect())
}

/// One named check from a verification suite.
#[pyclass(frozen, get_all, module = "sloc")]
pub struct Check {
    name: String,
    observed: f64,
    tolerance: f64,
    passed: bool,
}

#[pymethods]
impl Check {
    fn __repr__(&self) -> String {
        format!("Check({:?}, observed={:e}, tolerance={:e}, passed={})", self.name, self.observed, self.tolerance, self.passed)
    }
}

/// Run a verification suite by name. Suites that take a base use `target`
/// (standard normal when omitted).
#[pyfunction]
#[pyo3(signature = (name, target=None, seed=0, paths=10_000))]
fn run_suite(name: &str, target: Option<&Target>, seed: u64, paths: usize) -> PyResult<Vec<Check>> {
    let cfg = SuiteConfig { seed, paths, ..SuiteConfig::default() };
    let base = match target {
        Some(t) => t.inner.clone(),
        None => GaussianMeasure::standard(1).map_err(err)?.into(),
    };
    let checks = match name {
        "channel" => suites::channel_suite(&base, &cfg),
        "particle" => suites::particle_suite(&base, &cfg),
        "diffusion" => suites::diffusion_suite(&base, &cfg),
        "tweedie" => suites::tweedie_suite(&cfg),
        "polchinski" => suites::polchinski_suite(&base, &cfg),
        "polchinski_equation" => suites::polchinski_equation_suite(&cfg),
        "follmer" => suites::follmer_suite(&base, &cfg),
        "girsanov" => suites::girsanov_suite(&cfg),
        "eot_ssb" => suites::eot_ssb_suite(&cfg),
        "contraction" => suites::contraction_suite(&cfg),
        "kernel_identity" => suites::kernel_identity_suite(std::slice::from_ref(&base), &cfg),
        "stability" => suites::stability_suite(&cfg),
        "anisotropic" => suites::anisotropic_suite(&cfg),
        "lsi" => suites::lsi_suite(&cfg),
        "entropy_stability" => suites::entropy_stability_suite(&cfg),
        other => return Err(PyValueError::new_err(format!("unknown suite {other:?}"))),
    }
    .map_err(err)?;
    Ok(checks
        .into_iter()
        .map(|c| Check { name: c.name, observed: c.observed, tolerance: c.tolerance, passed: c.pass })
        .collect())
}

#[pymodule]
pub fn sloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Target>()?;
    m.add_class::<Bridge>()?;
    m.add_class::<Check>()?;
    m.add_function(wrap_pyfunction!(tilt_sde, m)?)?;
    m.add_function(wrap_pyfunction!(channel_path, m)?)?;
    m.add_function(wrap_pyfunction!(backward_sde, m)?)?;
    m.add_function(wrap_pyfunction!(tweedie_score, m)?)?;
    m.add_function(wrap_pyfunction!(polchinski_run, m)?)?;
    m.add_function(wrap_pyfunction!(renorm_potential, m)?)?;
    m.add_function(wrap_pyfunction!(girsanov_energy, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(rgd_chain, m)?)?;
    m.add_function(wrap_pyfunction!(chain_law_kl, m)?)?;
    m.add_function(wrap_pyfunction!(lsi_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(stability_factor, m)?)?;
    m.add_function(wrap_pyfunction!(lsi_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
