use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, normal_vector, Purpose};

/// An unnormalized negative log-density `V` with its gradient.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// Potentials available by name from JSON target descriptions.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinPotential {
    /// `½‖x‖²`.
    Gaussian { dim: usize },
    /// `½‖x‖² + k Σ x_i⁴`.
    Quartic { dim: usize, coef: f64 },
    /// `½‖x‖² + Σ log cosh(x_i − s)`.
    LogCosh { dim: usize, shift: f64 },
}

impl BuiltinPotential {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Quartic { .. } => "quartic",
            Self::LogCosh { .. } => "logcosh",
        }
    }

    /// Strong convexity and smoothness certificates `(α, β)`. The quartic
    /// potential is not globally smooth; its `β` is the curvature at the origin
    /// and only seeds the mode search step.
    pub fn certificates(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { .. } => (1.0, 1.0),
            Self::Quartic { .. } => (1.0, 1.0),
            Self::LogCosh { .. } => (1.0, 2.0),
        }
    }

    pub fn by_name(name: &str, dim: usize, param: Option<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("potential dimension must be at least 1".into()));
        }
        match name {
            "gaussian" => Ok(Self::Gaussian { dim }),
            "quartic" => {
                let coef = param.unwrap_or(0.1);
                if coef < 0.0 {
                    return Err(Error::InvalidArgument("quartic coefficient must be >= 0".into()));
                }
                Ok(Self::Quartic { dim, coef })
            }
            "logcosh" => Ok(Self::LogCosh { dim, shift: param.unwrap_or(0.0) }),
            other => Err(Error::InvalidArgument(format!("unknown potential `{other}`"))),
        }
    }
}

impl Potential for BuiltinPotential {
    fn dim(&self) -> usize {
        match *self {
            Self::Gaussian { dim } | Self::Quartic { dim, .. } | Self::LogCosh { dim, .. } => dim,
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let quad = 0.5 * x.norm_squared();
        match *self {
            Self::Gaussian { .. } => quad,
            Self::Quartic { coef, .. } => quad + coef * x.iter().map(|v| v.powi(4)).sum::<f64>(),
            Self::LogCosh { shift, .. } => quad + x.iter().map(|v| log_cosh(v - shift)).sum::<f64>(),
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match *self {
            Self::Gaussian { .. } => x.clone(),
            Self::Quartic { coef, .. } => x.map(|v| v + 4.0 * coef * v.powi(3)),
            Self::LogCosh { shift, .. } => x.map(|v| v + (v - shift).tanh()),
        }
    }
}

fn log_cosh(v: f64) -> f64 {
    let a = v.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A potential assembled from closures.
#[derive(Clone)]
pub struct FnPotential {
    dim: usize,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
}

impl FnPotential {
    pub fn new(
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, value: Arc::new(value), grad: Arc::new(grad) }
    }
}

impl fmt::Debug for FnPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPotential").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad)(x)
    }
}

/// `π ∝ exp(−V)` with a strong-convexity certificate `α` and optional
/// smoothness bound `β`.
#[derive(Debug, Clone)]
pub struct GenericPotential {
    potential: Arc<dyn Potential>,
    alpha: f64,
    beta: Option<f64>,
}

impl GenericPotential {
    pub fn new(potential: Arc<dyn Potential>, alpha: f64, beta: Option<f64>) -> Result<Self> {
        if potential.dim() == 0 {
            return Err(Error::InvalidArgument("potential dimension must be at least 1".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("strong convexity {alpha} must be >= 0")));
        }
        if let Some(b) = beta {
            if !(b >= alpha && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("smoothness {b} must be finite and >= α")));
            }
        }
        Ok(Self { potential, alpha, beta })
    }

    pub fn builtin(p: BuiltinPotential) -> Self {
        let (alpha, beta) = p.certificates();
        Self { potential: Arc::new(p), alpha, beta: Some(beta) }
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> Option<f64> {
        self.beta
    }
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.potential.value(x)
    }
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.potential.gradient(x)
    }

    /// Largest relative gradient defect `‖∇V − FD(V)‖ / (1 + ‖∇V‖)` over
    /// `probes` standard-normal points (scaled by `radius`).
    pub fn gradient_defect(&self, probes: usize, radius: f64, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, 0, Purpose::Aux);
        let h = 1e-5;
        let d = self.dim();
        (0..probes)
            .map(|_| {
                let x = normal_vector(&mut rng, d) * radius;
                let g = self.gradient(&x);
                let fd = DVector::from_fn(d, |i, _| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    (self.value(&xp) - self.value(&xm)) / (2.0 * h)
                });
                (g.clone() - fd).norm() / (1.0 + g.norm())
            })
            .fold(0.0, f64::max)
    }
}

/// Tilted potential `U(x) = V(x) − ⟨c,x⟩ + ½xᵀAx` with a Gaussian envelope
/// `U(x) ≥ U(x₀) + ⟨g₀, x−x₀⟩ + ½κ‖x−x₀‖²`, `κ = α + λ_min(A)`.
#[derive(Debug, Clone)]
pub(crate) struct Envelope<'a> {
    base: &'a GenericPotential,
    c: DVector<f64>,
    reg: DMatrix<f64>,
    anchor: DVector<f64>,
    u_anchor: f64,
    g_anchor: DVector<f64>,
    pub kappa: f64,
}

/// Settings for the rejection sampler and importance-sampling moments of
/// generic potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub max_tries: usize,
    pub mode_steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { max_tries: 10_000, mode_steps: 200 }
    }
}

impl<'a> Envelope<'a> {
    pub fn new(
        base: &'a GenericPotential,
        c: &DVector<f64>,
        reg: DMatrix<f64>,
        reg_min_eig: f64,
        reg_max_eig: f64,
        mode_steps: usize,
    ) -> Result<Self> {
        check_dim(base.dim(), c.len())?;
        let kappa = base.alpha + reg_min_eig;
        if !(kappa > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tilted potential is not strongly convex: α + λ_min(Σ_t) = {kappa}"
            )));
        }
        let beta = base.beta.ok_or_else(|| {
            Error::Unsupported("rejection sampling needs a finite smoothness bound β".into())
        })?;
        let mut env = Self {
            base,
            c: c.clone(),
            reg,
            anchor: DVector::zeros(base.dim()),
            u_anchor: 0.0,
            g_anchor: DVector::zeros(base.dim()),
            kappa,
        };
        env.locate_mode(1.0 / (beta + reg_max_eig), mode_steps);
        Ok(env)
    }

    pub fn u(&self, x: &DVector<f64>) -> f64 {
        self.base.value(x) - self.c.dot(x) + 0.5 * x.dot(&(&self.reg * x))
    }

    fn grad_u(&self, x: &DVector<f64>) -> DVector<f64> {
        self.base.gradient(x) - &self.c + &self.reg * x
    }

    // Gradient descent with a halving safeguard for potentials whose `β` is
    // only local.
    fn locate_mode(&mut self, step: f64, steps: usize) {
        let mut x = DVector::zeros(self.base.dim());
        let mut ux = self.u(&x);
        let mut h = step;
        for _ in 0..steps {
            let g = self.grad_u(&x);
            loop {
                let cand = &x - &g * h;
                let uc = self.u(&cand);
                if uc.is_finite() && uc <= ux {
                    x = cand;
                    ux = uc;
                    break;
                }
                h *= 0.5;
                if h < 1e-300 {
                    break;
                }
            }
        }
        self.g_anchor = self.grad_u(&x);
        self.u_anchor = ux;
        self.anchor = x;
    }

    /// Proposal mean of the envelope Gaussian.
    pub fn center(&self) -> DVector<f64> {
        &self.anchor - &self.g_anchor / self.kappa
    }

    /// `U(x) − L(x) ≥ 0`, the negative log acceptance probability.
    pub fn gap(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.anchor;
        let lower = self.u_anchor + self.g_anchor.dot(&r) + 0.5 * self.kappa * r.norm_squared();
        (self.u(x) - lower).max(0.0)
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.center() + normal_vector(rng, self.base.dim()) / self.kappa.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_tries: usize) -> Result<DVector<f64>> {
        for _ in 0..max_tries {
            let x = self.propose(rng);
            let u: f64 = rng.random();
            if u.ln() <= -self.gap(&x) {
                return Ok(x);
            }
        }
        // estimate acceptance on a fresh batch for the error report
        let probe = 1000;
        let accepted = (0..probe)
            .filter(|_| {
                let x = self.propose(rng);
                rng.random::<f64>().ln() <= -self.gap(&x)
            })
            .count();
        Err(Error::RejectionExhausted { tries: max_tries, rate: accepted as f64 / probe as f64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_gradients_pass_fd_check() {
        for p in [
            BuiltinPotential::Gaussian { dim: 3 },
            BuiltinPotential::Quartic { dim: 2, coef: 0.1 },
            BuiltinPotential::LogCosh { dim: 2, shift: 0.5 },
        ] {
            let g = GenericPotential::builtin(p);
            assert!(g.gradient_defect(20, 1.5, 1) < 1e-5);
        }
    }

    #[test]
    fn envelope_is_a_lower_bound() {
        let g = GenericPotential::builtin(BuiltinPotential::Quartic { dim: 1, coef: 0.1 });
        let c = DVector::from_element(1, 1.5);
        let env = Envelope::new(&g, &c, DMatrix::identity(1, 1) * 0.5, 0.5, 0.5, 200).unwrap();
        for i in -200..=200 {
            let x = DVector::from_element(1, i as f64 * 0.05);
            assert!(env.gap(&x) >= 0.0);
        }
    }

    #[test]
    fn missing_curvature_is_rejected() {
        let flat = GenericPotential::new(
            Arc::new(FnPotential::new(1, |_| 0.0, |_| DVector::zeros(1))),
            0.0,
            Some(1.0),
        )
        .unwrap();
        let c = DVector::zeros(1);
        assert!(Envelope::new(&flat, &c, DMatrix::zeros(1, 1), 0.0, 0.0, 10).is_err());
    }

    #[test]
    fn unknown_builtin_name() {
        assert!(BuiltinPotential::by_name("ring", 2, None).is_err());
    }
}
