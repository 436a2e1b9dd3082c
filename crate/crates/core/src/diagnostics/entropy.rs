use serde::{Deserialize, Serialize};

use super::moments::{batch_means_stderr, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Plug-in estimate of `Ent_μ[f] = E_μ[f log f] − E_μ f · log E_μ f` from
/// samples of `μ`, where `log f(x) = log_density(x) − log_partition`.
///
/// The standard error is the batch-means error of the linearized summand
/// `f log f − (1 + log E f) f`.
pub fn entropy_plugin<T>(
    samples: &[T],
    log_density: impl Fn(&T) -> f64,
    log_partition: f64,
) -> EntropyEstimate {
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|x| log_density(x) - log_partition).collect();
    let f: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let mean_f = f.iter().sum::<f64>() / n;
    let flogf: Vec<f64> = f.iter().zip(&logs).map(|(fi, li)| if *fi == 0.0 { 0.0 } else { fi * li }).collect();
    let value = flogf.iter().sum::<f64>() / n - mean_f * mean_f.ln();
    let shift = 1.0 + mean_f.ln();
    let influence: Vec<f64> = flogf.iter().zip(&f).map(|(a, fi)| a - shift * fi).collect();
    EntropyEstimate { value, stderr: batch_means_stderr(&influence, DEFAULT_BATCHES) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream, Purpose};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = stream(seed, 0, Purpose::Aux);
        (0..n).map(|_| standard_normal(&mut rng)).collect()
    }

    #[test]
    fn constant_function_has_zero_entropy() {
        let xs = normals(1, 1000);
        let e = entropy_plugin(&xs, |_| 0.0, 0.0);
        assert!(e.value.abs() < 1e-15);
    }

    #[test]
    fn linear_log_f_matches_closed_form() {
        // f = exp(θx − θ²/2) under N(0,1): Ent = θ²/2
        let theta = 0.8;
        let xs = normals(2, 200_000);
        let e = entropy_plugin(&xs, |x| theta * x, theta * theta / 2.0);
        assert!((e.value - theta * theta / 2.0).abs() <= 4.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn stderr_scales_with_sample_size() {
        let theta = 0.5;
        let a = entropy_plugin(&normals(3, 50_000), |x| theta * x, 0.0);
        let b = entropy_plugin(&normals(4, 200_000), |x| theta * x, 0.0);
        let ratio = b.stderr / a.stderr;
        assert!((ratio - 0.5).abs() <= 0.15, "ratio = {ratio}");
    }
}
