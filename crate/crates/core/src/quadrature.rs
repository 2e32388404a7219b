//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut rule = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    rule
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Composite rule on `[a, b]` with panels refined geometrically (ratio 1/2)
/// towards both endpoints, `levels` panels deep on each side.
pub fn graded_gauss_legendre(n: usize, a: f64, b: f64, levels: usize) -> Vec<(f64, f64)> {
    let mut breaks = vec![0.0];
    for k in (1..=levels).rev() {
        breaks.push(0.5f64.powi(k as i32 + 1));
    }
    breaks.push(0.5);
    for k in 1..=levels {
        breaks.push(1.0 - 0.5f64.powi(k as i32 + 1));
    }
    breaks.push(1.0);
    let len = b - a;
    let mut rule = Vec::with_capacity(n * (breaks.len() - 1));
    for pair in breaks.windows(2) {
        rule.extend(gauss_legendre_on(n, a + len * pair[0], a + len * pair[1]));
    }
    rule
}

/// Gauss–Legendre on `[a, b]` after the substitution `x = a + (b-a)(3t² - 2t³)`,
/// which flattens square-root endpoint behaviour.
pub fn smoothstep_gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    gauss_legendre_on(n, 0.0, 1.0)
        .into_iter()
        .map(|(t, w)| {
            let s = t * t * (3.0 - 2.0 * t);
            let ds = 6.0 * t * (1.0 - t);
            (a + (b - a) * s, w * (b - a) * ds)
        })
        .collect()
}
