//! Monotone time reparameterizations linking the tilt process to the
//! backward diffusion and to the Polchinski flow.

use crate::error::{Error, Result};

use super::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeChangeMap {
    /// Forward `τ ↦ t = τ/(1−τ)` on `[0, 1)`, inverse `t ↦ t/(1+t)`.
    SlToPolchinski,
    /// Forward `t ↦ 1/(e^{2t} − 1)` on `(0, ∞)`, inverse `u ↦ ½ log((u+1)/u)`.
    OuToReverse,
    /// Finite-horizon reversal `t ↦ T − t` on `[0, T]`, its own inverse.
    FiniteHorizon { horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl TimeChangeMap {
    pub fn forward(&self, x: f64) -> Option<f64> {
        let y = match *self {
            Self::SlToPolchinski if (0.0..1.0).contains(&x) => x / (1.0 - x),
            Self::OuToReverse if x > 0.0 => 1.0 / (2.0 * x).exp_m1(),
            Self::FiniteHorizon { horizon } if (0.0..=horizon).contains(&x) => horizon - x,
            _ => return None,
        };
        y.is_finite().then_some(y)
    }

    pub fn inverse(&self, u: f64) -> Option<f64> {
        let y = match *self {
            Self::SlToPolchinski if u >= 0.0 => u / (1.0 + u),
            Self::OuToReverse if u > 0.0 => 0.5 * (1.0 / u).ln_1p(),
            Self::FiniteHorizon { horizon } if (0.0..=horizon).contains(&u) => horizon - u,
            _ => return None,
        };
        y.is_finite().then_some(y)
    }

    /// Derivative of the inverse map.
    pub fn inverse_derivative(&self, u: f64) -> Option<f64> {
        match *self {
            Self::SlToPolchinski if u >= 0.0 => Some(1.0 / ((1.0 + u) * (1.0 + u))),
            Self::OuToReverse if u > 0.0 => Some(-1.0 / (2.0 * u * (u + 1.0))),
            Self::FiniteHorizon { horizon } if (0.0..=horizon).contains(&u) => Some(-1.0),
            _ => None,
        }
    }

    pub fn is_increasing(&self) -> bool {
        matches!(self, Self::SlToPolchinski)
    }

    fn apply(&self, x: f64, dir: Direction) -> Option<f64> {
        match dir {
            Direction::Forward => self.forward(x),
            Direction::Inverse => self.inverse(x),
        }
    }
}

/// Map every grid point; decreasing maps are re-sorted into an increasing grid.
/// Singular endpoints (e.g. `u = 0` under the OU inverse) must be clipped by the
/// caller first.
pub fn time_change_grid(grid: &TimeGrid, map: TimeChangeMap, dir: Direction) -> Result<TimeGrid> {
    let mut out = Vec::with_capacity(grid.len());
    for &x in grid.times() {
        let y = map.apply(x, dir).ok_or_else(|| {
            Error::InvalidGrid(format!("time change {map:?} ({dir:?}) undefined at {x}"))
        })?;
        out.push(y);
    }
    if !map.is_increasing() {
        out.reverse();
    }
    TimeGrid::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_points() {
        let g = TimeGrid::new(vec![1.0]).unwrap();
        let tau = time_change_grid(&g, TimeChangeMap::SlToPolchinski, Direction::Inverse).unwrap();
        assert_eq!(tau.times(), &[0.5]);
        let t = time_change_grid(&g, TimeChangeMap::OuToReverse, Direction::Inverse).unwrap();
        assert!((t.times()[0] - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn round_trips() {
        let g = TimeGrid::geometric(1e-3, 50.0, 40).unwrap();
        for map in [TimeChangeMap::OuToReverse, TimeChangeMap::SlToPolchinski] {
            let there = time_change_grid(&g, map, Direction::Inverse).unwrap();
            let back = time_change_grid(&there, map, Direction::Forward).unwrap();
            for (a, b) in g.times().iter().zip(back.times()) {
                assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_derivative_matches_central_differences() {
        for map in [TimeChangeMap::OuToReverse, TimeChangeMap::SlToPolchinski] {
            for &u in &[0.05, 0.3, 1.0, 2.5, 10.0] {
                let h = 1e-6 * u;
                let fd = (map.inverse(u + h).unwrap() - map.inverse(u - h).unwrap()) / (2.0 * h);
                let exact = map.inverse_derivative(u).unwrap();
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{map:?} {u}");
                // declared monotonicity
                assert_eq!(exact > 0.0, map.is_increasing());
            }
        }
        let ou = TimeChangeMap::OuToReverse;
        for &u in &[0.1, 1.0, 7.0] {
            assert!((ou.forward(ou.inverse(u).unwrap()).unwrap() - u).abs() < 1e-10 * u.max(1.0));
            assert_eq!(ou.inverse_derivative(u).unwrap(), -1.0 / (2.0 * u * (u + 1.0)));
        }
    }

    #[test]
    fn singular_endpoints_are_errors() {
        let g = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        assert!(time_change_grid(&g, TimeChangeMap::OuToReverse, Direction::Inverse).is_err());
        let g = TimeGrid::new(vec![0.5, 1.0]).unwrap();
        assert!(time_change_grid(&g, TimeChangeMap::SlToPolchinski, Direction::Forward).is_err());
        let fh = TimeChangeMap::FiniteHorizon { horizon: 2.0 };
        let g = TimeGrid::new(vec![0.0, 0.5, 2.0]).unwrap();
        assert_eq!(time_change_grid(&g, fh, Direction::Forward).unwrap().times(), &[0.0, 1.5, 2.0]);
    }
}
