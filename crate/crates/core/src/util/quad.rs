//! Gauss–Legendre quadrature with arbitrary node counts.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// ∫_a^b f with n-point Gauss–Legendre.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss–Legendre: the interval split into `panels` equal
/// panels with `n`-point rules.
pub fn integrate_composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| integrate(&f, a + i as f64 * h, a + (i + 1) as f64 * h, n))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        // 8-point rule is exact through degree 15
        let v = integrate(|x| x.powi(10) + 3.0 * x.powi(3), 0.0, 2.0, 8);
        let exact = 2.0f64.powi(11) / 11.0 + 3.0 * 2.0f64.powi(4) / 4.0;
        assert!((v - exact).abs() < 1e-11 * exact.abs());
    }

    #[test]
    fn composite_converges_on_oscillatory() {
        let v = integrate_composite(|x| (10.0 * x).sin(), 0.0, 1.0, 16, 8);
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-12);
    }
}
