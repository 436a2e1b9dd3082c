use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of batches used by batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    /// Sample mean with the iid standard error.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, stderr: (var / n).sqrt() }
    }

    /// Unbiased sample variance with the standard error `√(μ₄ − σ⁴)/√n`.
    pub fn variance_of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let c4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Self { mean: c2 * n / (n - 1.0).max(1.0), stderr: ((c4 - c2 * c2).max(0.0) / n).sqrt() }
    }

    /// `(a − b) / √(se_a² + se_b²)`; zero when both the difference and the
    /// error vanish.
    pub fn z_against(&self, other: &MeanEstimate) -> f64 {
        z_score(self.mean - other.mean, (self.stderr.powi(2) + other.stderr.powi(2)).sqrt())
    }

    pub fn z_against_value(&self, value: f64) -> f64 {
        z_score(self.mean - value, self.stderr)
    }
}

pub(crate) fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        diff.signum() * f64::INFINITY
    } else {
        diff / se
    }
}

/// Standard error of the mean of `xs` by non-overlapping batch means.
pub fn batch_means_stderr(xs: &[f64], batches: usize) -> f64 {
    let b = batches.min(xs.len()).max(1);
    let size = xs.len() / b;
    if size == 0 || b < 2 {
        return MeanEstimate::of(xs).stderr;
    }
    let means: Vec<f64> = (0..b)
        .map(|i| xs[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    MeanEstimate::of(&means).stderr
}

/// Raw moments `E[x^k]`, `k = 1..=orders`.
pub fn raw_moments(xs: &[f64], orders: usize) -> Vec<f64> {
    let n = xs.len() as f64;
    (1..=orders as i32).map(|k| xs.iter().map(|x| x.powi(k)).sum::<f64>() / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub empirical: Vec<f64>,
    pub reference: Vec<f64>,
    pub stderr: Vec<f64>,
    pub z: Vec<f64>,
}

impl MomentCheck {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().map(|z| z.abs()).fold(0.0, f64::max)
    }
}

/// Per-order z-scores of the raw moments of `samples` against `reference`
/// (`reference[k-1] = E[x^k]`, at most four orders), batch-means errors.
pub fn moment_check(samples: &[f64], reference: &[f64]) -> Result<MomentCheck> {
    if reference.is_empty() || reference.len() > 4 {
        return Err(Error::InvalidArgument("moment orders must be between 1 and 4".into()));
    }
    if !reference.iter().all(|r| r.is_finite()) {
        return Err(Error::InvalidArgument("reference moments must be finite".into()));
    }
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { min: 2, got: samples.len() });
    }
    let mut out = MomentCheck { empirical: vec![], reference: reference.to_vec(), stderr: vec![], z: vec![] };
    for (k, r) in reference.iter().enumerate() {
        let powers: Vec<f64> = samples.iter().map(|x| x.powi(k as i32 + 1)).collect();
        let m = powers.iter().sum::<f64>() / powers.len() as f64;
        let se = batch_means_stderr(&powers, DEFAULT_BATCHES);
        out.empirical.push(m);
        out.stderr.push(se);
        out.z.push(z_score(m - r, se));
    }
    Ok(out)
}
