//! Runge–Kutta integrators for small complex systems.
//!
//! The adaptive integrator is Dormand–Prince 5(4) with PI-free step
//! control; state is a fixed-size array of `Complex64`. A fixed-step
//! classical RK4 is provided for dense profile sampling.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
}

/// Dormand–Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 2_000_000;

/// Adaptive integration of `dy/dt = f(t, y)` from `t0` to `t1`
/// (either direction). After each accepted step `on_step(t, &mut y)` may
/// inspect or rescale the state (the systems integrated here are
/// linear, so uniform rescaling commutes with the flow).
pub fn integrate_adaptive<const N: usize, F, S>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [Complex64; N],
    rtol: f64,
    atol: f64,
    mut on_step: S,
) -> Result<[Complex64; N], OdeError>
where
    F: Fn(f64, &[Complex64; N]) -> [Complex64; N],
    S: FnMut(f64, &mut [Complex64; N]),
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = dir * (span / 100.0).min(0.1);
    let h_min = span * 1e-14;

    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(OdeError::TooManySteps(MAX_STEPS));
        }
        if h.abs() < h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }

        let k0 = f(t, &y);
        let mut ks: [[Complex64; N]; 7] = [[Complex64::new(0.0, 0.0); N]; 7];
        ks[0] = k0;
        for stage in 0..6 {
            let mut yi = y;
            for (j, kj) in ks.iter().enumerate().take(stage + 1) {
                let a = A[stage][j];
                if a != 0.0 {
                    for n in 0..N {
                        yi[n] += kj[n] * (h * a);
                    }
                }
            }
            ks[stage + 1] = f(t + C[stage] * h, &yi);
        }

        let mut y5 = y;
        let mut err = 0.0f64;
        let mut y_scale = 0.0f64;
        for n in 0..N {
            let mut dy5 = Complex64::new(0.0, 0.0);
            let mut dy4 = Complex64::new(0.0, 0.0);
            for j in 0..7 {
                dy5 += ks[j][n] * B5[j];
                dy4 += ks[j][n] * B4[j];
            }
            y5[n] += dy5 * h;
            let e = (dy5 - dy4).norm() * h.abs();
            err = err.max(e);
            y_scale = y_scale.max(y5[n].norm()).max(y[n].norm());
        }
        let tol = atol + rtol * y_scale;
        if err <= tol {
            t += h;
            y = y5;
            on_step(t, &mut y);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            h *= (0.9 * (tol / err).powf(0.2)).clamp(0.1, 1.0);
        }
    }
    Ok(y)
}

/// Fixed-step classical RK4 sampling: integrates from `t0` across
/// `n_steps` uniform steps to `t1`, recording the state after every
/// step. Returns `n_steps + 1` states including the initial one.
pub fn rk4_sample<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [Complex64; N],
    n_steps: usize,
) -> Vec<[Complex64; N]>
where
    F: Fn(f64, &[Complex64; N]) -> [Complex64; N],
{
    let h = (t1 - t0) / n_steps as f64;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut y = y0;
    out.push(y);
    let mut t = t0;
    for _ in 0..n_steps {
        let k1 = f(t, &y);
        let mut y2 = y;
        for n in 0..N {
            y2[n] += k1[n] * (h / 2.0);
        }
        let k2 = f(t + h / 2.0, &y2);
        let mut y3 = y;
        for n in 0..N {
            y3[n] += k2[n] * (h / 2.0);
        }
        let k3 = f(t + h / 2.0, &y3);
        let mut y4 = y;
        for n in 0..N {
            y4[n] += k3[n] * h;
        }
        let k4 = f(t + h, &y4);
        for n in 0..N {
            y[n] += (k1[n] + (k2[n] + k3[n]) * 2.0 + k4[n]) * (h / 6.0);
        }
        t += h;
        out.push(y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_matches_exponential() {
        // y' = i y, y(0) = 1 -> y(t) = e^{it}
        let f = |_t: f64, y: &[Complex64; 1]| [y[0] * Complex64::new(0.0, 1.0)];
        let y = integrate_adaptive(f, 0.0, 2.0, [Complex64::new(1.0, 0.0)], 1e-11, 1e-13, |_, _| {}).unwrap();
        let exact = Complex64::new(0.0, 2.0).exp();
        assert!((y[0] - exact).norm() < 1e-9);
    }

    #[test]
    fn adaptive_backward_direction() {
        let f = |_t: f64, y: &[Complex64; 1]| [y[0]];
        let y = integrate_adaptive(f, 1.0, 0.0, [Complex64::new(1.0, 0.0)], 1e-11, 1e-13, |_, _| {}).unwrap();
        assert!((y[0].re - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_sample_harmonic() {
        // y'' = -y as a system; y(0)=0, y'(0)=1 -> y = sin t
        let f = |_t: f64, y: &[Complex64; 2]| [y[1], -y[0]];
        let states = rk4_sample(f, 0.0, std::f64::consts::PI, [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], 2000);
        let last = states.last().unwrap();
        assert!(last[0].norm() < 1e-10);
        assert!((last[1].re + 1.0).abs() < 1e-10);
    }
}
