use crate::error::{Error, Result};

/// Strictly increasing, finite, non-negative times `t₀ < … < t_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if let Some(bad) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::InvalidGrid(format!("time {bad} is not a finite non-negative value")));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "times not strictly increasing at index {}: {} then {}",
                k + 1,
                times[k],
                times[k + 1]
            )));
        }
        Ok(Self { times })
    }

    /// `steps` equal intervals on `[start, end]`; the last point is exactly `end`.
    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        let h = (end - start) / steps as f64;
        let mut times: Vec<f64> = (0..steps).map(|k| start + k as f64 * h).collect();
        times.push(end);
        Self::new(times)
    }

    /// Log-uniform grid on `[start, end]`, `start > 0`.
    pub fn geometric(start: f64, end: f64, steps: usize) -> Result<Self> {
        if !(start > 0.0) {
            return Err(Error::InvalidGrid("geometric grid needs a positive start".into()));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        let ratio = (end / start).ln() / steps as f64;
        let mut times: Vec<f64> = (0..steps).map(|k| start * (k as f64 * ratio).exp()).collect();
        times.push(end);
        Self::new(times)
    }

    /// Uniform grid whose step is at most `dt`.
    pub fn with_max_step(start: f64, end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidGrid(format!("step {dt} must be positive")));
        }
        let steps = ((end - start) / dt - 1e-9).ceil().max(1.0) as usize;
        Self::uniform(start, end, steps)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Index of the grid point closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Refine by inserting `factor − 1` equally spaced points into every interval.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidGrid("refinement factor must be positive".into()));
        }
        let mut out = Vec::with_capacity(self.steps() * factor + 1);
        for w in self.times.windows(2) {
            let h = (w[1] - w[0]) / factor as f64;
            out.extend((0..factor).map(|j| w[0] + j as f64 * h));
        }
        out.push(self.end());
        Self::new(out)
    }
}
