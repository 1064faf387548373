//! Shared oracles for integration tests: finite differences and tolerance
//! helpers, deliberately independent of the crate's own differentiation
//! machinery.
#![allow(dead_code)]

/// Central finite-difference gradient of `f` at `at`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, at: &[f64], eps: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(at.len());
    let mut x = at.to_vec();
    for i in 0..at.len() {
        x[i] = at[i] + eps;
        let fp = f(&x);
        x[i] = at[i] - eps;
        let fm = f(&x);
        x[i] = at[i];
        g.push((fp - fm) / (2.0 * eps));
    }
    g
}

/// First three derivatives of a scalar function by central differences:
/// `[f, f', f'', f''']` with per-order step sizes tuned for f64 round-off.
pub fn fd_jet(f: impl Fn(f64) -> f64, x: f64) -> [f64; 4] {
    let h1 = 1e-6;
    let d1 = (f(x + h1) - f(x - h1)) / (2.0 * h1);
    let h2 = 1e-4;
    let d2 = (f(x + h2) - 2.0 * f(x) + f(x - h2)) / (h2 * h2);
    let h3 = 5e-3;
    let d3 = (f(x + 2.0 * h3) - 2.0 * f(x + h3) + 2.0 * f(x - h3) - f(x - 2.0 * h3))
        / (2.0 * h3 * h3 * h3);
    [f(x), d1, d2, d3]
}

/// Relative error with an absolute floor: |a-b| / max(1, |b|).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Assert two slices agree element-wise within `tol` relative error.
pub fn assert_slices_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length mismatch");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            rel_err(*g, *w) <= tol,
            "{what}[{i}]: got {g}, want {w} (rel err {})",
            rel_err(*g, *w)
        );
    }
}

/// Mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divisor n).
pub fn pop_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
