//! Reference solutions built independently of the solvers under test.
#![allow(dead_code)]

/// `g(t) = |t|^{p−2}t + a|t|^{q−2}t`.
pub fn flux_1d(p: f64, q: f64, a: f64, t: f64) -> f64 {
    let r = t.abs();
    if r == 0.0 {
        return 0.0;
    }
    t * (r.powf(p - 2.0) + a * r.powf(q - 2.0))
}

/// Inverse of the strictly increasing odd map `flux_1d`, by bisection.
pub fn inverse_flux_1d(p: f64, q: f64, a: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while flux_1d(p, q, a, hi) < y.abs() {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if flux_1d(p, q, a, mid) < y.abs() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) * y.signum()
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Composite five-point Gauss-Legendre rule with `pieces` panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    let mut s = 0.0;
    for k in 0..pieces {
        let c = a + (k as f64 + 0.5) * w;
        for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            s += wt * f(c + 0.5 * w * x);
        }
    }
    0.5 * w * s
}

/// Solution of `−(g(u'))' = ε` on `[0, 1]` with `u(0) = u0`, `u(1) = u1`,
/// sampled at `n` equispaced nodes: `u' = g⁻¹(F₀ − εx)` with `F₀` fixed by the
/// boundary values.
pub fn flux_inversion_1d(p: f64, q: f64, a: f64, eps: f64, u0: f64, u1: f64, n: usize) -> Vec<f64> {
    let slope = |f0: f64, x: f64| inverse_flux_1d(p, q, a, f0 - eps * x);
    let rise = |f0: f64| integrate(|x| slope(f0, x), 0.0, 1.0, 256);
    let target = u1 - u0;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while rise(lo) > target {
        lo *= 2.0;
    }
    while rise(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rise(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f0 = 0.5 * (lo + hi);
    let h = 1.0 / (n - 1) as f64;
    let mut out = vec![u0];
    let mut acc = u0;
    for i in 1..n {
        acc += integrate(|x| slope(f0, x), (i - 1) as f64 * h, i as f64 * h, 16);
        out.push(acc);
    }
    out
}

/// Least concave majorant of the points `(x_i, y_i)` evaluated at the `x_i`.
pub fn least_concave_majorant(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b if it lies on or below the chord from a to i
            let cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; x.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for k in a..=b {
            let t = (x[k] - x[a]) / (x[b] - x[a]);
            out[k] = y[a] + t * (y[b] - y[a]);
        }
    }
    if hull.len() == 1 {
        out[hull[0]] = y[hull[0]];
    }
    out
}

/// Observed order `log2(e_k / e_{k+1})` for successive halvings.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
