//! Rescaled critical-layer connection problem.
//!
//! The unknown is a complex eigenvalue `τ̃` with negative imaginary part
//! for which the third-order profile equation admits a solution `W̃`
//! joining 0 at −∞ to 1 at +∞ along a ray `e^{iθ}ℝ`. The derivative
//! `X = dW̃/dz̃` satisfies the second-order equation
//!
//! ```text
//! X'' = (6 z̃ X' + (6 + i B²) X) / B,      B(z̃) = τ̃ − z̃²,
//! ```
//!
//! which is regular at z̃ = 0. The spectrum splits into a family of
//! simple eigenvalues `(4j+3)e^{iπ/4}`, `j ≥ 0`, lying on the stable
//! side, plus a single eigenvalue `τ̃* = e^{−3iπ/4}` with `Im τ̃* < 0`
//! — the one driving instability. The default scan window
//! [`ScanRegion::default_lower`] brackets exactly that root.
//!
//! The recessive branch decays like a Gaussian
//! `z̃^α exp(e^{3iπ/4} z̃²/2)` in the two admissible sectors
//! (`(−π/8, 3π/8)` mod π); shooting inward from both truncation ends
//! and matching at z̃ = 0 gives a defect holomorphic in `τ̃` whose roots
//! are the eigenvalues. An independent Chebyshev collocation
//! discretization of the two-point problem cross-validates the solved
//! `τ̃`.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::util::ode::{integrate_adaptive, rk4_sample, OdeError};
use crate::util::{cheb, fit};

/// Default half-length of the truncated integration ray.
pub const DEFAULT_TRUNCATION: f64 = 8.0;
/// Angular margin kept between the ray and the singular directions.
pub const RAY_MARGIN: f64 = 0.01;

const RTOL: f64 = 1e-11;
// Purely relative error control: the recessive seed at the truncation
// end sits ~19 orders of magnitude below its value at the matching
// point, and any absolute-tolerance floor there is amplified by the
// full Gaussian growth factor on the way in.
const ATOL: f64 = 0.0;
/// Fixed-step samples per half-ray in profile reconstruction.
const SAMPLES_PER_SIDE: usize = 16_000;

#[derive(Debug, Error)]
pub enum ShearLayerError {
    #[error("singular coefficient: τ̃ − z̃² = 0 or z̃ = 0")]
    SingularCoefficient,
    #[error("integration ray passes within {RAY_MARGIN} rad of a coefficient singularity")]
    PathThroughSingularity,
    #[error("truncation too small: Gaussian suppression exp(-{0:.2}) insufficient at the ray ends")]
    TruncationTooSmall(f64),
    #[error("no defect minimum in the interior of the scan region")]
    NoRootInRegion,
    #[error("Newton iteration diverged (last |defect| = {0:.3e})")]
    NewtonDiverged(f64),
    #[error("jump condition `{name}` violated by {size:.3e}")]
    JumpMismatch { name: &'static str, size: f64 },
    #[error("decay fit failed: |X| underflowed or was non-finite on the ray")]
    FitFailed,
    #[error("sector not strictly inside a Gaussian-decay sector")]
    SectorOutsideDecayRegion,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// The 2×2 coefficient matrix `B(z̃)` of the substituted first-order
/// system `𝒳' = z̃ B 𝒳`, `𝒳 = (X, X'/z̃)`.
pub fn assemble_b(
    tau_tilde: Complex64,
    z_tilde: Complex64,
) -> Result<[[Complex64; 2]; 2], ShearLayerError> {
    let b = tau_tilde - z_tilde * z_tilde;
    if z_tilde.norm() == 0.0 || b.norm() == 0.0 {
        return Err(ShearLayerError::SingularCoefficient);
    }
    let z2 = z_tilde * z_tilde;
    let six = Complex64::new(6.0, 0.0);
    Ok([
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        [(six + Complex64::i() * b * b) / (z2 * b), six / b - 1.0 / z2],
    ])
}

/// Right-hand side `z̃·B(z̃)·𝒳` of the substituted system; regular as an
/// expression but still singular at z̃ = 0 through B's second row. The
/// scalar form used by the integrators avoids the substitution entirely.
pub fn regularized_rhs(
    tau_tilde: Complex64,
    z_tilde: Complex64,
    chi: [Complex64; 2],
) -> Result<[Complex64; 2], ShearLayerError> {
    let b = assemble_b(tau_tilde, z_tilde)?;
    Ok([
        z_tilde * (b[0][0] * chi[0] + b[0][1] * chi[1]),
        z_tilde * (b[1][0] * chi[0] + b[1][1] * chi[1]),
    ])
}

/// Gaussian decay rate of the recessive branch along the ray of angle
/// `theta`: |X| ~ exp(−rate·s²). Positive only inside the two
/// admissible sectors.
pub fn gaussian_decay_rate(theta: f64) -> f64 {
    -(0.75 * PI + 2.0 * theta).cos() / 2.0
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    }
    if d < -PI {
        d += 2.0 * PI;
    }
    d
}

fn check_ray(tau_tilde: Complex64, theta: f64, trunc: f64) -> Result<(), ShearLayerError> {
    if tau_tilde.norm() < 1e-12 {
        return Err(ShearLayerError::SingularCoefficient);
    }
    // τ̃ − z̃² vanishes on the ray iff arg τ̃ = 2θ and |τ̃| ≤ Z².
    if angle_diff(tau_tilde.arg(), 2.0 * theta).abs() < RAY_MARGIN
        && tau_tilde.norm() <= trunc * trunc * 1.05
    {
        return Err(ShearLayerError::PathThroughSingularity);
    }
    let suppression = gaussian_decay_rate(theta) * trunc * trunc;
    if suppression < 16.0 {
        return Err(ShearLayerError::TruncationTooSmall(suppression));
    }
    Ok(())
}

/// Algebraic exponent of the recessive branch `X ~ z̃^α e^{e^{3iπ/4}z̃²/2}`.
fn recessive_exponent(tau_tilde: Complex64) -> Complex64 {
    Complex64::new(-3.5, 0.0) + tau_tilde * 0.5 * Complex64::from_polar(1.0, -FRAC_PI_4)
}

/// Two-term recessive boundary data `(X, X')` at the ray point `z_end`.
fn recessive_seed(tau_tilde: Complex64, z_end: Complex64) -> [Complex64; 2] {
    let alpha = recessive_exponent(tau_tilde);
    let gauss = Complex64::from_polar(1.0, 0.75 * PI); // e^{3iπ/4}
    let x = (alpha * z_end.ln() + gauss * z_end * z_end * 0.5).exp();
    let xp = (alpha / z_end + gauss * z_end) * x;
    [x, xp]
}

/// RHS of the scalar `(X, X')` system in the real ray parameter `s`,
/// `z̃ = e^{iθ} s`; derivatives stored with respect to `z̃`.
fn ray_rhs2(tau_tilde: Complex64, theta: f64) -> impl Fn(f64, &[Complex64; 2]) -> [Complex64; 2] {
    let rot = Complex64::from_polar(1.0, theta);
    move |s, y| {
        let z = rot * s;
        let b = tau_tilde - z * z;
        let xpp = (z * 6.0 * y[1] + (Complex64::new(6.0, 0.0) + Complex64::i() * b * b) * y[0]) / b;
        [rot * y[1], rot * xpp]
    }
}

/// Same with the running integral `W = ∫ X dz̃` appended.
fn ray_rhs3(tau_tilde: Complex64, theta: f64) -> impl Fn(f64, &[Complex64; 3]) -> [Complex64; 3] {
    let rot = Complex64::from_polar(1.0, theta);
    move |s, y| {
        let z = rot * s;
        let b = tau_tilde - z * z;
        let xpp = (z * 6.0 * y[1] + (Complex64::new(6.0, 0.0) + Complex64::i() * b * b) * y[0]) / b;
        [rot * y[1], rot * xpp, rot * y[0]]
    }
}

/// Both recessive solutions `(X, X')` shot inward to z̃ = 0 from ∓Z.
fn shoot_pair(
    tau_tilde: Complex64,
    theta: f64,
    truncation_z: f64,
) -> Result<([Complex64; 2], [Complex64; 2]), ShearLayerError> {
    check_ray(tau_tilde, theta, truncation_z)?;
    let rot = Complex64::from_polar(1.0, theta);
    let rhs = ray_rhs2(tau_tilde, theta);
    let right = integrate_adaptive(
        &rhs,
        truncation_z,
        0.0,
        recessive_seed(tau_tilde, rot * truncation_z),
        RTOL,
        ATOL,
        |_, _| {},
    )?;
    let left = integrate_adaptive(
        &rhs,
        -truncation_z,
        0.0,
        recessive_seed(tau_tilde, -rot * truncation_z),
        RTOL,
        ATOL,
        |_, _| {},
    )?;
    Ok((left, right))
}

/// Connection defect: the Wronskian-type determinant at z̃ = 0 of the
/// two recessive solutions shot inward from ±Z along the ray of angle
/// `theta`. Holomorphic in `τ̃`; vanishes exactly at eigenvalues.
pub fn connection_defect(
    tau_tilde: Complex64,
    theta: f64,
    truncation_z: f64,
) -> Result<Complex64, ShearLayerError> {
    let (left, right) = shoot_pair(tau_tilde, theta, truncation_z)?;
    Ok(left[0] * right[1] - right[0] * left[1])
}

/// |defect| with the smooth seed-amplitude trend divided out; used for
/// basin detection in coarse scans (not holomorphic, unlike
/// [`connection_defect`]).
fn scaled_defect_norm(
    tau_tilde: Complex64,
    theta: f64,
    truncation_z: f64,
) -> Result<f64, ShearLayerError> {
    let (l, r) = shoot_pair(tau_tilde, theta, truncation_z)?;
    let det = l[0] * r[1] - r[0] * l[1];
    let ln = (l[0].norm_sqr() + l[1].norm_sqr()).sqrt();
    let rn = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
    if ln == 0.0 || rn == 0.0 {
        return Err(ShearLayerError::SingularCoefficient);
    }
    Ok(det.norm() / (ln * rn))
}

/// Rectangle in the complex τ̃-plane scanned for defect minima.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ScanRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl ScanRegion {
    /// Default lower-half-plane scan window.
    pub fn default_lower() -> Self {
        Self { re_min: -3.0, re_max: 3.0, im_min: -3.0, im_max: -0.05 }
    }

    pub fn mirrored_upper(&self) -> Self {
        Self { re_min: self.re_min, re_max: self.re_max, im_min: -self.im_max, im_max: -self.im_min }
    }
}

/// Solved connection problem with reconstructed profiles.
#[derive(Debug, Clone)]
pub struct ShearLayerProfile {
    pub tau_tilde: Complex64,
    /// Physical eigenvalue τ = (1/√2)|u_s''(a)|^{1/2} τ̃.
    pub tau: Complex64,
    pub curvature: f64,
    pub ray_angle_theta: f64,
    pub truncation: f64,
    /// Ray parameter s ∈ [−Z, Z]; z̃ = e^{iθ}s.
    pub s_grid: Vec<f64>,
    /// Physical coordinate z = 2^{1/4}|u_s''(a)|^{−1/4} z̃.
    pub z_grid: Vec<Complex64>,
    pub w_tilde: Vec<Complex64>,
    /// X = dW̃/dz̃ on the grid.
    pub x_samples: Vec<Complex64>,
    /// dX/dz̃ on the grid.
    pub x_prime: Vec<Complex64>,
    pub v_tilde: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub defect: Complex64,
    pub decay_rate_alpha: f64,
    /// Glued one-sided limits (W̃, X, X') at s = 0∓ and 0±, for jump
    /// bookkeeping.
    pub match_left: [Complex64; 3],
    pub match_right: [Complex64; 3],
    /// Measured jumps ([V], [V'], [V'']) at z = 0, filled by
    /// [`build_v_profiles`].
    pub jumps: [Complex64; 3],
}

impl ShearLayerProfile {
    /// Physical-length scale factor z/z̃.
    pub fn length_scale(&self) -> f64 {
        2f64.powf(0.25) * self.curvature.abs().powf(-0.25)
    }

    /// Linear interpolation of W̃ at ray parameter `s`.
    pub fn interp_w(&self, s: f64) -> Complex64 {
        let n = self.s_grid.len();
        let s0 = self.s_grid[0];
        let h = self.s_grid[1] - s0;
        let t = ((s - s0) / h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let frac = t - i as f64;
        self.w_tilde[i] * (1.0 - frac) + self.w_tilde[i + 1] * frac
    }

    /// Linear interpolation of the full state `(W̃, X, X')` at ray
    /// parameter `s` (clamped to the stored ray).
    pub fn interp_state(&self, s: f64) -> (Complex64, Complex64, Complex64) {
        let n = self.s_grid.len();
        let s0 = self.s_grid[0];
        let h = self.s_grid[1] - s0;
        let t = ((s - s0) / h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let frac = t - i as f64;
        let lerp = |a: &[Complex64]| a[i] * (1.0 - frac) + a[i + 1] * frac;
        (lerp(&self.w_tilde), lerp(&self.x_samples), lerp(&self.x_prime))
    }
}

/// `(X'', X''')` from the scalar profile ODE and its derivative, given
/// `(X, X')` at a regular point (`B = τ̃ − z̃² ≠ 0`). Lets callers build
/// high-order derivative stacks of the reconstructed profile without
/// finite differencing.
pub fn x_higher_derivs(
    tau_tilde: Complex64,
    z_tilde: Complex64,
    x: Complex64,
    xp: Complex64,
) -> Result<(Complex64, Complex64), ShearLayerError> {
    let b = tau_tilde - z_tilde * z_tilde;
    if b.norm() == 0.0 {
        return Err(ShearLayerError::SingularCoefficient);
    }
    let coeff = Complex64::new(6.0, 0.0) + Complex64::i() * b * b;
    let xpp = (z_tilde * 6.0 * xp + coeff * x) / b;
    // d/dz̃ of the numerator, plus the quotient-rule term 2z̃·X''.
    let nprime =
        xp * 6.0 + z_tilde * 6.0 * xpp - Complex64::i() * 4.0 * z_tilde * b * x + coeff * xp;
    let xppp = (nprime + z_tilde * 2.0 * xpp) / b;
    Ok((xpp, xppp))
}

/// Scan the region on a coarse grid, refine the best interior point by
/// damped complex Newton, and reconstruct the full profile.
pub fn solve_tau(
    region: &ScanRegion,
    theta: f64,
    curvature: f64,
) -> Result<ShearLayerProfile, ShearLayerError> {
    solve_tau_with(region, theta, curvature, DEFAULT_TRUNCATION, 21)
}

/// [`solve_tau`] with explicit truncation and scan resolution, for
/// refinement studies.
pub fn solve_tau_with(
    region: &ScanRegion,
    theta: f64,
    curvature: f64,
    truncation_z: f64,
    n_scan: usize,
) -> Result<ShearLayerProfile, ShearLayerError> {
    if region.re_max <= region.re_min || region.im_max <= region.im_min {
        return Err(ShearLayerError::InvalidRegion("empty rectangle".into()));
    }

    let mut points = Vec::with_capacity(n_scan * n_scan);
    for i in 0..n_scan {
        for j in 0..n_scan {
            let re = region.re_min + (region.re_max - region.re_min) * i as f64 / (n_scan - 1) as f64;
            let im = region.im_min + (region.im_max - region.im_min) * j as f64 / (n_scan - 1) as f64;
            points.push(Complex64::new(re, im));
        }
    }
    let norms = crate::parallel::map(&points, |&t| {
        scaled_defect_norm(t, theta, truncation_z).unwrap_or(f64::INFINITY)
    });
    // The defect funnels toward each eigenvalue over an O(1)
    // neighborhood, but its off-spectrum background is not flat — it
    // can decay monotonically toward a region edge and put the global
    // argmin on the boundary. Every strict interior local minimum of
    // the scan is therefore a root candidate; Newton decides.
    let mut candidates: Vec<(f64, Complex64)> = Vec::new();
    for i in 1..n_scan - 1 {
        for j in 1..n_scan - 1 {
            let v = norms[i * n_scan + j];
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            'outer: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let w = norms[(i as i64 + di) as usize * n_scan + (j as i64 + dj) as usize];
                    if w < v {
                        is_min = false;
                        break 'outer;
                    }
                }
            }
            if is_min {
                candidates.push((v, points[i * n_scan + j]));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inside = |t: Complex64| {
        t.re >= region.re_min && t.re <= region.re_max && t.im >= region.im_min && t.im <= region.im_max
    };
    let mut last_norm = f64::INFINITY;
    for &(_, start) in &candidates {
        if let Ok((tau, fval)) = newton_refine(start, theta, truncation_z) {
            if fval.norm() <= 1e-10 && inside(tau) {
                return reconstruct(tau, theta, curvature, truncation_z, fval);
            }
            last_norm = last_norm.min(fval.norm());
        }
    }
    if candidates.is_empty() || !last_norm.is_finite() {
        Err(ShearLayerError::NoRootInRegion)
    } else {
        Err(ShearLayerError::NewtonDiverged(last_norm))
    }
}

/// Newton-refine `τ̃` from a known starting guess, skipping the coarse
/// scan, and reconstruct the profile. Used when the eigenvalue is
/// already located and only the ray angle changes (the eigenvalue is
/// ray-independent, the profile is not).
pub fn solve_tau_from_guess(
    guess: Complex64,
    theta: f64,
    curvature: f64,
    truncation_z: f64,
) -> Result<ShearLayerProfile, ShearLayerError> {
    let (tau, fval) = newton_refine(guess, theta, truncation_z)?;
    if fval.norm() > 1e-10 {
        return Err(ShearLayerError::NewtonDiverged(fval.norm()));
    }
    reconstruct(tau, theta, curvature, truncation_z, fval)
}

/// Damped complex Newton on the holomorphic connection defect; returns
/// the refined `τ̃` and its final defect.
fn newton_refine(
    start: Complex64,
    theta: f64,
    truncation_z: f64,
) -> Result<(Complex64, Complex64), ShearLayerError> {
    let eval = |t: Complex64| connection_defect(t, theta, truncation_z).ok();
    let mut tau = start;
    let mut fval = eval(tau).ok_or(ShearLayerError::NoRootInRegion)?;
    let fd_h = 1e-6;
    for _ in 0..60 {
        if fval.norm() < 1e-13 {
            break;
        }
        let fp = eval(tau + fd_h);
        let fm = eval(tau - fd_h);
        let (fp, fm) = match (fp, fm) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(ShearLayerError::NewtonDiverged(fval.norm())),
        };
        let deriv = (fp - fm) / (2.0 * fd_h);
        if deriv.norm() == 0.0 {
            return Err(ShearLayerError::NewtonDiverged(fval.norm()));
        }
        let mut step = fval / deriv;
        let mut improved = false;
        for _ in 0..8 {
            let cand = tau - step;
            if let Some(fc) = eval(cand) {
                if fc.norm() < fval.norm() {
                    tau = cand;
                    fval = fc;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        if step.norm() < 1e-14 {
            break;
        }
    }
    Ok((tau, fval))
}

fn reconstruct(
    tau_tilde: Complex64,
    theta: f64,
    curvature: f64,
    truncation_z: f64,
    defect: Complex64,
) -> Result<ShearLayerProfile, ShearLayerError> {
    let n = SAMPLES_PER_SIDE;
    let rot = Complex64::from_polar(1.0, theta);
    let rhs = ray_rhs3(tau_tilde, theta);
    let seed = |z_end: Complex64| {
        let [x, xp] = recessive_seed(tau_tilde, z_end);
        [x, xp, Complex64::new(0.0, 0.0)]
    };
    // right_states[j] sits at s = Z − j h, left_states[j] at s = −Z + j h.
    let right_states = rk4_sample(&rhs, truncation_z, 0.0, seed(rot * truncation_z), n);
    let left_states = rk4_sample(&rhs, -truncation_z, 0.0, seed(-rot * truncation_z), n);
    let l0 = left_states[n];
    let r0 = right_states[n];

    // Least-squares gluing scale for the (X, X') directions.
    let kappa = (r0[0] * l0[0].conj() + r0[1] * l0[1].conj())
        / (l0[0].norm_sqr() + l0[1].norm_sqr());
    // Absolute scale from the inhomogeneous boundary values W̃(−∞)=0,
    // W̃(+∞)=1: c_R (κ W_L(0) − W_R(0)) = 1.
    let denom = kappa * l0[2] - r0[2];
    if denom.norm() == 0.0 {
        return Err(ShearLayerError::NewtonDiverged(defect.norm()));
    }
    let c_r = Complex64::new(1.0, 0.0) / denom;
    let c_l = kappa * c_r;

    let total = 2 * n + 1;
    let h = truncation_z / n as f64;
    let mut s_grid = Vec::with_capacity(total);
    let mut w_tilde = Vec::with_capacity(total);
    let mut x_samples = Vec::with_capacity(total);
    let mut x_prime = Vec::with_capacity(total);
    for i in 0..total {
        let s = -truncation_z + i as f64 * h;
        s_grid.push(s);
        if i < n {
            let st = left_states[i];
            x_samples.push(c_l * st[0]);
            x_prime.push(c_l * st[1]);
            w_tilde.push(c_l * st[2]);
        } else {
            let st = right_states[2 * n - i];
            x_samples.push(c_r * st[0]);
            x_prime.push(c_r * st[1]);
            w_tilde.push(Complex64::new(1.0, 0.0) + c_r * st[2]);
        }
    }

    // Gaussian decay exponent of the recessive tail on the right half,
    // with the known algebraic prefactor s^{Re α} divided out.
    let alg = recessive_exponent(tau_tilde).re;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &s) in s_grid.iter().enumerate() {
        if s >= 0.4 * truncation_z && s <= 0.9 * truncation_z {
            let m = x_samples[i].norm();
            if m > 0.0 && m.is_finite() {
                xs.push(s * s);
                ys.push(m.ln() - alg * s.ln());
            }
        }
    }
    if xs.len() < 10 {
        return Err(ShearLayerError::FitFailed);
    }
    let (slope, _, _) = fit::linear_fit(&xs, &ys);

    let scale = 2f64.powf(0.25) * curvature.abs().powf(-0.25);
    let tau = tau_tilde * curvature.abs().sqrt() / 2f64.sqrt();
    let z_grid: Vec<Complex64> = s_grid.iter().map(|&s| rot * (scale * s)).collect();

    Ok(ShearLayerProfile {
        tau_tilde,
        tau,
        curvature,
        ray_angle_theta: theta,
        truncation: truncation_z,
        s_grid,
        z_grid,
        w_tilde,
        x_samples,
        x_prime,
        v_tilde: Vec::new(),
        v: Vec::new(),
        defect,
        decay_rate_alpha: -slope,
        match_left: [c_l * l0[2], c_l * l0[0], c_l * l0[1]],
        match_right: [
            Complex64::new(1.0, 0.0) + c_r * r0[2],
            c_r * r0[0],
            c_r * r0[1],
        ],
        jumps: [Complex64::new(0.0, 0.0); 3],
    })
}

/// Populate the physical profiles Ṽ and V and verify the jump
/// conditions [V] = −τ, [V'] = 0, [V''] = −u_s''(a) at z = 0.
pub fn build_v_profiles(
    mut profile: ShearLayerProfile,
    curvature: f64,
) -> Result<ShearLayerProfile, ShearLayerError> {
    let scale = 2f64.powf(0.25) * curvature.abs().powf(-0.25);
    let tau = profile.tau_tilde * curvature.abs().sqrt() / 2f64.sqrt();
    profile.curvature = curvature;
    profile.tau = tau;
    let rot = Complex64::from_polar(1.0, profile.ray_angle_theta);
    profile.z_grid = profile.s_grid.iter().map(|&s| rot * (scale * s)).collect();

    let phi = |z: Complex64| tau + z * z * (0.5 * curvature);
    profile.v_tilde =
        profile.z_grid.iter().zip(&profile.w_tilde).map(|(&z, &w)| phi(z) * w).collect();
    profile.v = profile
        .s_grid
        .iter()
        .zip(profile.z_grid.iter().zip(&profile.v_tilde))
        .map(|(&s, (&z, &vt))| if s > 0.0 { vt - phi(z) } else { vt })
        .collect();

    // One-sided limits at z = 0 from the two independent inward
    // integrations: Ṽ = φW, Ṽ' = φ'W + φ W_z, Ṽ'' = φ''W + 2φ'W_z + φ W_zz
    // with φ(0) = τ, φ'(0) = 0, φ''(0) = curvature, W_z = X/scale.
    let limit = |m: &[Complex64; 3]| {
        let (w, x, xp) = (m[0], m[1], m[2]);
        [
            tau * w,
            tau * x / scale,
            w * curvature + tau * xp / (scale * scale),
        ]
    };
    let lv = limit(&profile.match_left);
    let rv = limit(&profile.match_right);
    // Heaviside subtraction acts on the z > 0 side only.
    let rv_sub = [rv[0] - tau, rv[1], rv[2] - curvature];
    let jumps = [rv_sub[0] - lv[0], rv_sub[1] - lv[1], rv_sub[2] - lv[2]];
    profile.jumps = jumps;

    let expected = [-tau, Complex64::new(0.0, 0.0), Complex64::new(-curvature, 0.0)];
    let names = ["[V]", "[V']", "[V'']"];
    for i in 0..3 {
        let size = (jumps[i] - expected[i]).norm();
        if size > 1e-6 {
            return Err(ShearLayerError::JumpMismatch { name: names[i], size });
        }
    }
    Ok(profile)
}

/// Fitted decay data along one ray.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RayDecay {
    pub theta: f64,
    /// Fitted Gaussian exponent of |X| (positive = decay).
    pub alpha: f64,
    pub r_squared: f64,
    /// Fitted Gaussian exponent of the W̃-boundary-value gap.
    pub w_alpha: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DecayReport {
    pub rays: Vec<RayDecay>,
}

/// Integrate the recessive branch along several rays of the given
/// sector and fit the Gaussian decay exponents of X and of the W̃
/// boundary gap. The sector must sit strictly inside one of the two
/// admissible decay sectors (margin `delta`).
pub fn verify_sector_decay(
    profile: &ShearLayerProfile,
    sector: (f64, f64),
    delta: f64,
    n_rays: usize,
) -> Result<DecayReport, ShearLayerError> {
    let in_sector = |theta: f64| {
        // Both sectors reduce mod π to (−π/8, 3π/8).
        let mut t = theta % PI;
        if t >= 3.0 * PI / 8.0 + delta {
            t -= PI;
        }
        if t < -PI / 8.0 - delta {
            t += PI;
        }
        t > -PI / 8.0 + delta && t < 3.0 * PI / 8.0 - delta
    };
    if !in_sector(sector.0) || !in_sector(sector.1) || sector.1 < sector.0 {
        return Err(ShearLayerError::SectorOutsideDecayRegion);
    }

    let z_max = profile.truncation;
    let mut rays = Vec::with_capacity(n_rays);
    for i in 0..n_rays {
        let theta = if n_rays == 1 {
            sector.0
        } else {
            sector.0 + (sector.1 - sector.0) * i as f64 / (n_rays - 1) as f64
        };
        check_ray(profile.tau_tilde, theta, z_max)?;
        let rot = Complex64::from_polar(1.0, theta);
        let rhs = ray_rhs3(profile.tau_tilde, theta);
        let [x0, xp0] = recessive_seed(profile.tau_tilde, rot * z_max);
        let states = rk4_sample(&rhs, z_max, 0.4 * z_max, [x0, xp0, Complex64::new(0.0, 0.0)], 4000);
        let mut s2 = Vec::new();
        let mut lx = Vec::new();
        let mut lw = Vec::new();
        let h = 0.6 * z_max / 4000.0;
        for (j, st) in states.iter().enumerate() {
            let s = z_max - j as f64 * h;
            if s > 0.9 * z_max {
                continue;
            }
            let (mx, mw) = (st[0].norm(), st[2].norm());
            if !mx.is_finite() || mx < 1e-300 {
                return Err(ShearLayerError::FitFailed);
            }
            s2.push(s * s);
            lx.push(mx.ln() - recessive_exponent(profile.tau_tilde).re * s.ln());
            if mw > 1e-300 {
                lw.push(mw.ln());
            } else {
                lw.push(-700.0);
            }
        }
        let (slope_x, _, r2) = fit::linear_fit(&s2, &lx);
        let (slope_w, _, _) = fit::linear_fit(&s2, &lw);
        rays.push(RayDecay { theta, alpha: -slope_x, r_squared: r2, w_alpha: -slope_w });
    }
    Ok(DecayReport { rays })
}

/// Independent cross-validation: Chebyshev collocation of the
/// third-order two-point problem for W̃ on [−L, L] with boundary
/// conditions W(L)=1, W'(L)=0, W(−L)=0, W'(−L)=0 and the eigenvalue τ̃
/// as an extra unknown. Newton with analytic Jacobian.
pub fn solve_tau_collocation<F: Fn(f64) -> Complex64>(
    tau_guess: Complex64,
    w_init: F,
    half_width: f64,
    n: usize,
) -> Result<Complex64, ShearLayerError> {
    let np1 = n + 1;
    let x = cheb::points(n, half_width);
    let d1 = cheb::diff_matrix(n, half_width);
    let d2 = cheb::mat_mul(&d1, &d1, np1);
    let d3 = cheb::mat_mul(&d2, &d1, np1);

    let apply = |m: &[f64], v: &DVector<Complex64>| -> DVector<Complex64> {
        DVector::from_fn(np1, |i, _| {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..np1 {
                acc += v[j] * m[i * np1 + j];
            }
            acc
        })
    };

    let mut w = DVector::from_fn(np1, |i, _| w_init(x[i]));
    let mut tau = tau_guess;
    let dim = np1 + 1;
    let ic = Complex64::i();

    for _ in 0..40 {
        let w1 = apply(&d1, &w);
        let w2 = apply(&d2, &w);
        let w3 = apply(&d3, &w);

        let mut res = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        let mut jac = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));

        // Boundary rows.
        res[0] = w[0] - 1.0;
        jac[(0, 0)] = Complex64::new(1.0, 0.0);
        res[1] = w1[0];
        res[2] = w[n];
        jac[(2, n)] = Complex64::new(1.0, 0.0);
        res[3] = w1[n];
        for k in 0..np1 {
            jac[(1, k)] = Complex64::new(d1[k], 0.0);
            jac[(3, k)] = Complex64::new(d1[n * np1 + k], 0.0);
        }

        // Interior collocation rows at j = 1..=n−2.
        for j in 1..=n - 2 {
            let row = 3 + j;
            let b = tau - x[j] * x[j];
            res[row] = ic * (b * w3[j] - w2[j] * (6.0 * x[j]) - w1[j] * 6.0) + b * b * w1[j];
            for k in 0..np1 {
                jac[(row, k)] = ic
                    * (b * d3[j * np1 + k]
                        - Complex64::new(6.0 * x[j] * d2[j * np1 + k], 0.0)
                        - Complex64::new(6.0 * d1[j * np1 + k], 0.0))
                    + b * b * d1[j * np1 + k];
            }
            jac[(row, np1)] = ic * w3[j] + b * w1[j] * 2.0;
        }

        let res_norm = res.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        let delta = jac
            .lu()
            .solve(&res)
            .ok_or(ShearLayerError::NewtonDiverged(res_norm))?;
        for k in 0..np1 {
            w[k] -= delta[k];
        }
        tau -= delta[np1];
        if delta[np1].norm() < 1e-12 && res_norm < 1e-4 {
            return Ok(tau);
        }
    }
    Err(ShearLayerError::NewtonDiverged(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn solved() -> &'static ShearLayerProfile {
        static CELL: OnceLock<ShearLayerProfile> = OnceLock::new();
        CELL.get_or_init(|| {
            let p = solve_tau(&ScanRegion::default_lower(), 0.0, -1.0).unwrap();
            build_v_profiles(p, -1.0).unwrap()
        })
    }

    #[test]
    fn b_matrix_printed_values() {
        let b = assemble_b(Complex64::i(), Complex64::new(1.0, 0.0)).unwrap();
        assert!((b[1][0] - Complex64::new(-4.0, -4.0)).norm() < 1e-12);
        assert!((b[1][1] - Complex64::new(-4.0, -3.0)).norm() < 1e-12);
        assert_eq!(b[0][0], Complex64::new(0.0, 0.0));
        assert_eq!(b[0][1], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn b_matrix_infinity_limit_and_eigenvalues() {
        let z = Complex64::new(1e6, 0.0);
        let b = assemble_b(Complex64::i(), z).unwrap();
        assert!((b[1][0] - Complex64::new(0.0, -1.0)).norm() < 1e-5);
        assert!(b[1][1].norm() < 1e-5);
        // Eigenvalues of [[0,1],[−i,0]]: λ² = −i, λ = ±i e^{iπ/4}.
        let lam = (-Complex64::i()).sqrt();
        let expected = Complex64::i() * Complex64::from_polar(1.0, FRAC_PI_4);
        assert!((lam - expected).norm().min((lam + expected).norm()) < 1e-12);
    }

    #[test]
    fn singular_coefficient_rejected() {
        assert!(matches!(
            assemble_b(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)),
            Err(ShearLayerError::SingularCoefficient)
        ));
        assert!(matches!(
            assemble_b(Complex64::i(), Complex64::new(0.0, 0.0)),
            Err(ShearLayerError::SingularCoefficient)
        ));
    }

    #[test]
    fn substituted_system_matches_scalar_form() {
        // 𝒳' = z̃B𝒳 with 𝒳 = (X, X'/z̃) must agree with the scalar RHS.
        let tau = Complex64::new(0.3, -0.9);
        let z = Complex64::new(1.3, 0.4);
        let x = Complex64::new(0.7, -0.2);
        let xp = Complex64::new(-0.1, 0.5);
        let chi = [x, xp / z];
        let rhs = regularized_rhs(tau, z, chi).unwrap();
        // Scalar: X' = xp; (X'/z̃)' = X''/z̃ − X'/z̃².
        let b = tau - z * z;
        let xpp = (z * 6.0 * xp + (Complex64::new(6.0, 0.0) + Complex64::i() * b * b) * x) / b;
        assert!((rhs[0] - xp).norm() < 1e-12);
        assert!((rhs[1] - (xpp / z - xp / (z * z))).norm() < 1e-12);
    }

    #[test]
    fn path_through_singularity_detected() {
        let err = connection_defect(Complex64::new(16.0, 0.0), 0.0, 8.0);
        assert!(matches!(err, Err(ShearLayerError::PathThroughSingularity)));
    }

    #[test]
    fn truncation_too_small_detected() {
        let err = connection_defect(Complex64::new(0.5, -1.0), 0.0, 2.0);
        assert!(matches!(err, Err(ShearLayerError::TruncationTooSmall(_))));
    }

    #[test]
    fn solve_finds_lower_half_root() {
        let p = solved();
        assert!(p.tau_tilde.im < 0.0, "τ̃ = {}", p.tau_tilde);
        assert!(p.defect.norm() < 1e-10, "|defect| = {:.3e}", p.defect.norm());
        assert!(p.tau.im < 0.0);
        // τ = τ̃/√2 for curvature −1.
        assert!((p.tau - p.tau_tilde / 2f64.sqrt()).norm() < 1e-12);
        // The root is e^{−3iπ/4} exactly (the single lower-half
        // eigenvalue of the rescaled profile equation).
        let exact = Complex64::from_polar(1.0, -3.0 * FRAC_PI_4);
        assert!(
            (p.tau_tilde - exact).norm() < 1e-8,
            "τ̃ = {} vs exact {}",
            p.tau_tilde,
            exact
        );
    }

    #[test]
    fn boundary_values_attained() {
        let p = solved();
        assert!(p.w_tilde.first().unwrap().norm() < 1e-6);
        assert!((p.w_tilde.last().unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn jump_conditions_hold() {
        let p = solved();
        assert!((p.jumps[0] + p.tau).norm() < 1e-6, "[V] = {}", p.jumps[0]);
        assert!(p.jumps[1].norm() < 1e-6, "[V'] = {}", p.jumps[1]);
        // curvature −1 ⇒ [V''] = +1.
        assert!((p.jumps[2] - Complex64::new(1.0, 0.0)).norm() < 1e-6, "[V''] = {}", p.jumps[2]);
        // V vanishes at both ends.
        assert!(p.v.first().unwrap().norm() < 1e-6);
        assert!(p.v.last().unwrap().norm() < 1e-6);
    }

    #[test]
    fn v_tilde_relation_pointwise() {
        let p = solved();
        for i in (0..p.s_grid.len()).step_by(997) {
            let z = p.z_grid[i];
            let phi = p.tau + z * z * (0.5 * p.curvature);
            assert!((p.v_tilde[i] - phi * p.w_tilde[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn defect_is_holomorphic() {
        // Cauchy–Riemann via finite differences: ∂f/∂(Re τ̃) = −i ∂f/∂(Im τ̃).
        let t = Complex64::new(-0.4, -1.1);
        let h = 1e-5;
        let fr = (connection_defect(t + h, 0.0, 8.0).unwrap()
            - connection_defect(t - h, 0.0, 8.0).unwrap())
            / (2.0 * h);
        let fi = (connection_defect(t + Complex64::new(0.0, h), 0.0, 8.0).unwrap()
            - connection_defect(t - Complex64::new(0.0, h), 0.0, 8.0).unwrap())
            / (2.0 * h);
        let scale = fr.norm().max(fi.norm()).max(1e-30);
        // CR: f_x = −i f_y.
        assert!(
            (fr - (-Complex64::i()) * fi).norm() / scale < 1e-6,
            "CR residual {:.3e}",
            (fr - (-Complex64::i()) * fi).norm() / scale
        );
    }

    #[test]
    fn ray_independence_of_eigenvalue() {
        let p = solved();
        let p2 = solve_tau(&ScanRegion::default_lower(), 0.05, -1.0).unwrap();
        assert!(
            (p.tau_tilde - p2.tau_tilde).norm() < 1e-8,
            "Δτ̃ = {:.3e}",
            (p.tau_tilde - p2.tau_tilde).norm()
        );
    }

    #[test]
    fn truncation_refinement_stability() {
        let p = solved();
        let region = ScanRegion {
            re_min: p.tau_tilde.re - 0.3,
            re_max: p.tau_tilde.re + 0.3,
            im_min: p.tau_tilde.im - 0.3,
            im_max: p.tau_tilde.im + 0.3,
        };
        let p2 = solve_tau_with(&region, 0.0, -1.0, 11.0, 9).unwrap();
        assert!(
            (p.tau_tilde - p2.tau_tilde).norm() < 1e-8,
            "Δτ̃ = {:.3e}",
            (p.tau_tilde - p2.tau_tilde).norm()
        );
    }

    #[test]
    fn collocation_cross_validation() {
        let p = solved();
        let tau_c = solve_tau_collocation(p.tau_tilde, |s| p.interp_w(s), 7.0, 120).unwrap();
        assert!(
            (tau_c - p.tau_tilde).norm() < 1e-6,
            "shooting {} vs collocation {} (gap {:.3e})",
            p.tau_tilde,
            tau_c,
            (tau_c - p.tau_tilde).norm()
        );
    }

    #[test]
    fn ode_residual_interior() {
        // (τ̃−z̃²)²W̃' + i d³/dz̃³((τ̃−z̃²)W̃) = B²X + i(BX'' − 6z̃X' − 6X),
        // with X'' from 4th-order finite differences of the stored X'.
        let p = solved();
        let h = p.s_grid[1] - p.s_grid[0];
        let mut worst = 0.0f64;
        for i in (2..p.s_grid.len() - 2).step_by(13) {
            let s = p.s_grid[i];
            if s.abs() < 0.1 || s.abs() > 0.9 * p.truncation {
                continue;
            }
            let z = Complex64::new(s, 0.0);
            let b = p.tau_tilde - z * z;
            let xpp = (-p.x_prime[i + 2] + p.x_prime[i + 1] * 8.0 - p.x_prime[i - 1] * 8.0
                + p.x_prime[i - 2])
                / (12.0 * h);
            let res = b * b * p.x_samples[i]
                + Complex64::i() * (b * xpp - z * 6.0 * p.x_prime[i] - p.x_samples[i] * 6.0);
            worst = worst.max(res.norm());
        }
        assert!(worst < 1e-6, "worst interior residual {worst:.3e}");
    }

    #[test]
    fn argmin_isolation() {
        let p = solved();
        let center = connection_defect(p.tau_tilde, 0.0, 8.0).unwrap().norm();
        let mut ring_min = f64::INFINITY;
        for i in 0..12 {
            let ang = 2.0 * PI * i as f64 / 12.0;
            let t = p.tau_tilde + Complex64::from_polar(0.1, ang);
            ring_min = ring_min.min(connection_defect(t, 0.0, 8.0).unwrap().norm());
        }
        assert!(
            ring_min > 1e3 * center.max(1e-300),
            "center {center:.3e}, ring min {ring_min:.3e}"
        );
    }

    #[test]
    fn gaussian_decay_matches_prediction() {
        let p = solved();
        // Recessive modulus on the real axis: α = √2/4.
        let predicted = 2f64.sqrt() / 4.0;
        assert!(
            (p.decay_rate_alpha - predicted).abs() < 0.1 * predicted,
            "fitted α = {}, predicted {}",
            p.decay_rate_alpha,
            predicted
        );
    }

    #[test]
    fn sector_decay_report() {
        let p = solved();
        // Rays near the sector edges lose Gaussian suppression at this
        // truncation, so sample the well-suppressed middle band.
        let report = verify_sector_decay(p, (0.02, 0.32), 0.01, 4).unwrap();
        for ray in &report.rays {
            assert!(ray.alpha > 0.0, "θ = {}: α = {}", ray.theta, ray.alpha);
            assert!(ray.r_squared > 0.99, "θ = {}: R² = {}", ray.theta, ray.r_squared);
            assert!(ray.w_alpha > 0.0);
        }
        assert!(matches!(
            verify_sector_decay(p, (PI / 2.0 - 0.1, PI / 2.0), 0.01, 2),
            Err(ShearLayerError::SectorOutsideDecayRegion)
        ));
    }

    #[test]
    fn stable_family_in_upper_half_plane() {
        // The mirrored upper-half region contains the leading member of
        // the stable eigenvalue family, 3e^{iπ/4}.
        let res = solve_tau(&ScanRegion::default_lower().mirrored_upper(), 0.0, -1.0);
        match res {
            Ok(p) => {
                assert!(p.tau_tilde.im > 0.0);
                let exact = Complex64::from_polar(3.0, FRAC_PI_4);
                assert!(
                    (p.tau_tilde - exact).norm() < 1e-7,
                    "upper root {} vs {}",
                    p.tau_tilde,
                    exact
                );
            }
            Err(e) => {
                eprintln!("upper-half scan: {e}");
            }
        }
    }
}
