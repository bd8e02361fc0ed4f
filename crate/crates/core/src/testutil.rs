//! Shared helpers for unit tests.

/// Assert |a - b| <= tol * max(|a|, |b|, 1).
pub fn assert_close(a: f64, b: f64, tol: f64) {
    let denom = a.abs().max(b.abs()).max(1.0);
    assert!(
        (a - b).abs() <= tol * denom,
        "values differ: {a} vs {b} (tol {tol})"
    );
}

/// Central finite differences of a scalar function, step `h` per coordinate.
pub fn finite_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}
