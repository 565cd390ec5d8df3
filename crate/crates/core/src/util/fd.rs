//! Centered finite differences on uniform grids, with one-sided closure
//! at the ends.

use num_complex::Complex64;

/// Second-order first derivative of complex samples.
pub fn derivative(f: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = f.len();
    assert!(n >= 3);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    out[0] = (f[1] * 4.0 - f[2] - f[0] * 3.0) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) / (2.0 * h);
    out
}

/// k-th derivative by repeated application of [`derivative`].
pub fn derivative_k(f: &[Complex64], h: f64, k: usize) -> Vec<Complex64> {
    let mut cur = f.to_vec();
    for _ in 0..k {
        cur = derivative(&cur, h);
    }
    cur
}

/// Real-valued counterpart of [`derivative`].
pub fn derivative_real(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 3);
    let mut out = vec![0.0; n];
    out[0] = (4.0 * f[1] - f[2] - 3.0 * f[0]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    out
}
