use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample size accepted by [`ks_two_sample`]; below it the
/// asymptotic p-value is unreliable.
pub const KS_MIN_SAMPLES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

/// Classical two-sample Kolmogorov–Smirnov test with the asymptotic
/// (Stephens-corrected) p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TwoSampleResult> {
    let (n, m) = (a.len(), b.len());
    if n.min(m) < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { min: KS_MIN_SAMPLES, got: n.min(m) });
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("KS input contains NaN".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);

    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(TwoSampleResult { statistic: d, p_value: kolmogorov_survival(lambda), n, m })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`, clamped to `[0, 1]`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev = 0.0f64;
    for k in 1..=200 {
        let term = sign * (a * (k * k) as f64).exp();
        sum += term;
        if term.abs() <= 1e-12 * prev.abs().max(sum.abs()) {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
        prev = term;
    }
    // series failed to converge: λ is tiny
    1.0
}
