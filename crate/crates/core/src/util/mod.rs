//! Shared numerical utilities: adaptive/fixed Runge–Kutta integration,
//! Chebyshev collocation matrices, quadrature, finite differences,
//! linear fits and small linear-algebra helpers.

pub mod cheb;
pub mod fd;
pub mod fit;
pub mod ode;
pub mod quad;

use num_complex::Complex64;

/// Uniform grid on `[0, end]` with `n + 1` nodes.
pub fn linspace(start: f64, end: f64, n_intervals: usize) -> Vec<f64> {
    let h = (end - start) / n_intervals as f64;
    (0..=n_intervals).map(|i| start + h * i as f64).collect()
}

/// Trapezoidal prefix integrals: `out[i] = ∫_{x0}^{xi} f` on a uniform
/// grid with spacing `h`; `out[0] = 0`.
pub fn prefix_trapezoid(f: &[Complex64], h: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = Complex64::new(0.0, 0.0);
    out.push(acc);
    for i in 1..f.len() {
        acc += (f[i - 1] + f[i]) * (0.5 * h);
        out.push(acc);
    }
    out
}

/// Trapezoidal integral of complex samples on a uniform grid.
pub fn trapezoid(f: &[Complex64], h: f64) -> Complex64 {
    if f.len() < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let mut acc = (f[0] + f[f.len() - 1]) * 0.5;
    for v in &f[1..f.len() - 1] {
        acc += v;
    }
    acc * h
}

/// Trapezoidal integral of real samples on a uniform grid.
pub fn trapezoid_real(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let mut acc = (f[0] + f[f.len() - 1]) * 0.5;
    for v in &f[1..f.len() - 1] {
        acc += v;
    }
    acc * h
}

/// Solve a complex tridiagonal system in place (Thomas algorithm).
/// `lower[i]` multiplies x[i-1] in row i (lower[0] unused), `diag[i]`
/// multiplies x[i], `upper[i]` multiplies x[i+1] (upper[n-1] unused).
pub fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &[Complex64],
) -> Vec<Complex64> {
    let n = diag.len();
    assert!(n >= 2);
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}
