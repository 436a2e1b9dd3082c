//! Composite Simpson quadrature on finite intervals.

/// `∫_a^b f` with composite Simpson on `points` nodes (rounded up to odd).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let n = if points % 2 == 0 { points + 1 } else { points.max(3) };
    let h = (b - a) / (n - 1) as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Uniform nodes and Simpson weights, for repeated integrals on one grid.
pub fn simpson_rule(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = if points % 2 == 0 { points + 1 } else { points.max(3) };
    let h = (b - a) / (n - 1) as f64;
    let nodes = (0..n).map(|i| a + i as f64 * h).collect();
    let weights = (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}
