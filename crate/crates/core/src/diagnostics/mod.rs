//! Statistical utilities shared by the equivalence and contraction checks.

mod entropy;
mod kl;
mod ks;
mod moments;
pub mod quad;

pub use entropy::{entropy_plugin, EntropyEstimate};
pub use kl::{gaussian_kl, GaussianKlInput};
pub use ks::{kolmogorov_survival, ks_two_sample, TwoSampleResult};
pub use moments::{batch_means_stderr, moment_check, raw_moments, MeanEstimate, MomentCheck};

/// Default significance level of the equivalence checks.
pub const DEFAULT_LEVEL: f64 = 0.01;

/// Level for each of `k` simultaneous tests under a Bonferroni correction.
pub fn bonferroni(level: f64, k: usize) -> f64 {
    level / k.max(1) as f64
}
