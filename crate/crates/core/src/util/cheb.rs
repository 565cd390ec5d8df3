//! Chebyshev–Lobatto collocation: points and differentiation matrix.

use std::f64::consts::PI;

/// Chebyshev–Lobatto points mapped to `[-half_width, half_width]`,
/// ordered from `+half_width` down to `-half_width` (standard x_j =
/// cos(j π / n) ordering).
pub fn points(n: usize, half_width: f64) -> Vec<f64> {
    (0..=n).map(|j| half_width * (j as f64 * PI / n as f64).cos()).collect()
}

/// First-order Chebyshev differentiation matrix on the points of
/// [`points`], row-major `(n+1) x (n+1)`.
pub fn diff_matrix(n: usize, half_width: f64) -> Vec<f64> {
    let np1 = n + 1;
    let x = points(n, 1.0);
    let mut c = vec![1.0; np1];
    c[0] = 2.0;
    c[n] = 2.0;
    let mut d = vec![0.0; np1 * np1];
    for i in 0..np1 {
        for j in 0..np1 {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                d[i * np1 + j] = (c[i] / c[j]) * sign / (x[i] - x[j]);
            }
        }
    }
    for i in 0..np1 {
        let mut row_sum = 0.0;
        for j in 0..np1 {
            if j != i {
                row_sum += d[i * np1 + j];
            }
        }
        d[i * np1 + i] = -row_sum;
    }
    // scale from [-1, 1] to [-half_width, half_width]
    for v in &mut d {
        *v /= half_width;
    }
    d
}

/// Row-major square matrix product, both `(n+1) x (n+1)`.
pub fn mat_mul(a: &[f64], b: &[f64], np1: usize) -> Vec<f64> {
    let mut out = vec![0.0; np1 * np1];
    for i in 0..np1 {
        for k in 0..np1 {
            let aik = a[i * np1 + k];
            if aik != 0.0 {
                for j in 0..np1 {
                    out[i * np1 + j] += aik * b[k * np1 + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_polynomial_exactly() {
        let n = 16;
        let half = 2.5;
        let x = points(n, half);
        let d = diff_matrix(n, half);
        // f = x^3 - 2x, f' = 3x^2 - 2; exact for N >= 3
        let f: Vec<f64> = x.iter().map(|&x| x.powi(3) - 2.0 * x).collect();
        for i in 0..=n {
            let mut df = 0.0;
            for j in 0..=n {
                df += d[i * (n + 1) + j] * f[j];
            }
            let exact = 3.0 * x[i] * x[i] - 2.0;
            assert!((df - exact).abs() < 1e-10, "i={i}: {df} vs {exact}");
        }
    }
}
