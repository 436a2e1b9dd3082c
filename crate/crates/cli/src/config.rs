//! Experiment configuration: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sloc_core::suites::SuiteConfig;
use sloc_core::targets::{MatrixSpec, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Tilt,
    Particle,
    Channel,
    Diffusion,
    Polchinski,
    Follmer,
}

impl Perspective {
    /// Perspectives whose drift or oracle needs a closed-form density.
    pub fn requires_exact(self) -> bool {
        matches!(self, Perspective::Particle | Perspective::Diffusion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    /// Restricts `simulate` and `equiv` to one construction.
    pub perspective: Option<Perspective>,
    pub dt: f64,
    pub horizon: f64,
    pub eps_clip: f64,
    pub u_max: f64,
    pub paths: usize,
    pub particles: usize,
    pub particle_runs: usize,
    pub trajectories: usize,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub format: Format,
    pub level: f64,
    pub eta: f64,
    pub alpha: f64,
    pub rgd_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::Gaussian { mean: vec![0.0], cov: MatrixSpec::Nested(vec![vec![1.0]]) },
            perspective: None,
            dt: 1e-3,
            horizon: 1.0,
            eps_clip: 1e-3,
            u_max: 100.0,
            paths: 10_000,
            particles: 1_000,
            particle_runs: 1_000,
            trajectories: 10,
            seed: None,
            out: PathBuf::from("out"),
            format: Format::Json,
            level: 0.01,
            eta: 1.0,
            alpha: 1.0,
            rgd_steps: 20,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "target",
    "perspective",
    "dt",
    "horizon",
    "eps_clip",
    "u_max",
    "paths",
    "particles",
    "particle_runs",
    "trajectories",
    "seed",
    "out",
    "format",
    "level",
    "eta",
    "alpha",
    "rgd_steps",
];

/// A config that parsed, with warnings about ignored keys.
#[derive(Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// Every problem found, not just the first.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

pub fn parse_config(text: &str) -> Result<Loaded, ConfigErrors> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigErrors(vec![format!("malformed JSON: {e}")]))?;
    let Some(obj) = value.as_object() else {
        return Err(ConfigErrors(vec!["config must be a JSON object".into()]));
    };
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    let mut known = serde_json::Map::new();
    for (k, v) in obj {
        if KNOWN_KEYS.contains(&k.as_str()) {
            known.insert(k.clone(), v.clone());
        } else {
            warnings.push(format!("unknown key \"{k}\" ignored"));
        }
    }
    // Parse field by field so every type error is reported.
    let mut config = ExperimentConfig::default();
    let mut merged = serde_json::to_value(&config).expect("config serializes");
    for (k, v) in known {
        let mut probe = merged.clone();
        probe[&k] = v.clone();
        match serde_json::from_value::<ExperimentConfig>(probe) {
            Ok(_) => merged[&k] = v,
            Err(e) => errors.push(format!("{k}: {e}")),
        }
    }
    if errors.is_empty() {
        config = serde_json::from_value(merged).expect("fields checked individually");
    }
    if errors.is_empty() {
        errors.extend(validate(&config));
    }
    if errors.is_empty() {
        Ok(Loaded { config, warnings })
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn validate_config(path: &Path) -> Result<Loaded, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config(&text)
}

/// Range and compatibility checks on an already parsed config.
pub fn validate(c: &ExperimentConfig) -> Vec<String> {
    let mut errors = Vec::new();
    let mut positive = |name: &str, v: f64| {
        if !(v > 0.0 && v.is_finite()) {
            errors.push(format!("{name} must be positive and finite, got {v}"));
        }
    };
    positive("dt", c.dt);
    positive("horizon", c.horizon);
    positive("u_max", c.u_max);
    positive("eta", c.eta);
    positive("alpha", c.alpha);
    if !(c.eps_clip > 0.0 && c.eps_clip < 0.5) {
        errors.push(format!("eps_clip must lie in (0, 0.5), got {}", c.eps_clip));
    }
    if c.eps_clip >= c.u_max {
        errors.push("eps_clip must be below u_max".into());
    }
    if !(c.level > 0.0 && c.level < 1.0) {
        errors.push(format!("level must lie in (0, 1), got {}", c.level));
    }
    if c.dt > c.horizon {
        errors.push(format!("dt = {} exceeds horizon = {}", c.dt, c.horizon));
    }
    for (name, v) in [("paths", c.paths), ("particles", c.particles), ("particle_runs", c.particle_runs), ("rgd_steps", c.rgd_steps)] {
        if v == 0 {
            errors.push(format!("{name} must be at least 1"));
        }
    }
    match c.target.build() {
        Ok(t) => {
            if let Some(p) = c.perspective {
                if p.requires_exact() && !t.is_exact() {
                    errors.push(format!("perspective {p:?} needs a gaussian or mixture target, got {}", t.kind()));
                }
            }
        }
        Err(e) => errors.push(format!("target: {e}")),
    }
    errors
}

impl ExperimentConfig {
    pub fn suite_config(&self, seed: u64) -> SuiteConfig {
        SuiteConfig {
            seed,
            paths: self.paths,
            particles: self.particles,
            particle_runs: self.particle_runs,
            dt: self.dt,
            horizon: self.horizon,
            eps_clip: self.eps_clip,
            u_max: self.u_max,
            level: self.level,
            eta: self.eta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let l = parse_config(r#"{"target":{"kind":"gaussian","mean":[0],"cov":[[1]]}}"#).unwrap();
        assert!(l.warnings.is_empty());
        assert_eq!(l.config, ExperimentConfig::default());
    }

    #[test]
    fn errors_are_aggregated() {
        let e = parse_config(r#"{"dt": -1, "paths": 0, "level": 2}"#).unwrap_err();
        assert_eq!(e.0.len(), 3, "{e}");
        assert!(e.0[0].contains("dt"));
        let e = parse_config(r#"{"dt": "x", "paths": -3}"#).unwrap_err();
        assert_eq!(e.0.len(), 2, "{e}");
    }

    #[test]
    fn unknown_keys_warn() {
        let l = parse_config(r#"{"foo": 1}"#).unwrap();
        assert_eq!(l.warnings, vec!["unknown key \"foo\" ignored".to_string()]);
    }

    #[test]
    fn diffusion_needs_exact_target() {
        let e = parse_config(r#"{"perspective":"diffusion","target":{"kind":"potential-ref","name":"quartic","dim":1}}"#)
            .unwrap_err();
        assert!(e.0[0].contains("Diffusion"), "{e}");
        assert!(parse_config(r#"{"perspective":"channel","target":{"kind":"potential-ref","name":"quartic","dim":1}}"#).is_ok());
    }

    #[test]
    fn malformed_json() {
        assert!(parse_config("{").unwrap_err().0[0].starts_with("malformed JSON"));
    }
}
