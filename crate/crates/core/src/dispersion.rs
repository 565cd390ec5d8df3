//! Direct eigenvalue computation for the Fourier-side spectral
//! problems, by shooting from the far field.
//!
//! Both variants reduce to the same normal form
//!
//! ```text
//! (w + u_s) v' − u_s' v + i e v''' = 0,
//! ```
//!
//! with `(w, e) = (ω, ε)` for the initial-value variant and
//! `(w, e) = (ω̃, ε̃) = (1/ω, −ε/ω)` for the boundary-value variant.
//! The unstable branch carries `Im ω < 0`.
//!
//! The admissible far-field space is two-dimensional — the constant
//! solution plus the decaying exponential `e^{μy}`, `Re μ < 0` — and is
//! transported from `y = Y_max` down to the critical point in wedge
//! (compound matrix) coordinates, which stay well-conditioned where a
//! raw basis would collapse onto the dominant solution. From the wall,
//! the unique (up to scale) solution with `v(0) = v'(0) = 0` is
//! integrated up to the same point; the defect is the 3×3 matching
//! determinant between the two, normalized to be scale-free and
//! holomorphic in `ω`. Matching at the critical point rather than
//! evaluating the transported subspace at the wall is essential: the
//! one-sided wall determinant sees the eigenvalue only through a
//! contribution that shrinks exponentially in `ε^{-1/2}`, so its zeros
//! become numerically invisible below `ε ≈ 1e-3`, while the two-sided
//! determinant stays well-conditioned.

use crate::shear_flow::ShearFlow;
use crate::util::ode::{integrate_adaptive, OdeError};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DispersionError {
    #[error("state overflowed despite rescaling")]
    StiffnessOverflow,
    #[error("far-field characteristic roots collide (|ω + U| too small)")]
    FarFieldDegenerate,
    #[error("Newton stalled with |defect| = {0:.3e}")]
    NewtonDiverged(f64),
    #[error("converged onto the stable branch (Im ω = {0:.3e} > 0)")]
    WrongBranch(f64),
    #[error("Newton iterates crossed the principal branch cut")]
    BranchCrossing,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    Ivp,
    Bvp,
}

/// Solved eigenvalue with its asymptotic comparison data.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DispersionResult {
    pub variant: Variant,
    pub epsilon: f64,
    pub omega: Complex64,
    /// ω̃ = 1/ω.
    pub omega_tilde: Complex64,
    /// ε̃ = −ω̃ ε.
    pub eps_tilde: Complex64,
    pub predicted_omega: Complex64,
    pub defect_norm: f64,
    /// |Im τ|/u_s(a)^{3/2} (BVP spatial rate) or |Im τ| (IVP
    /// normalization).
    pub sigma: f64,
    /// |ω − predicted|/√ε.
    pub prediction_error: f64,
}

/// Normal-form coefficients `(w, e)` for a variant.
pub fn normal_form_coeffs(
    variant: Variant,
    epsilon: f64,
    omega: Complex64,
) -> Result<(Complex64, Complex64), DispersionError> {
    if epsilon <= 0.0 {
        return Err(DispersionError::InvalidInput("epsilon must be positive".into()));
    }
    match variant {
        Variant::Ivp => Ok((omega, Complex64::new(epsilon, 0.0))),
        Variant::Bvp => {
            if omega.norm() < 1e-12 {
                return Err(DispersionError::InvalidInput("omega must be nonzero for BVP".into()));
            }
            let omega_tilde = omega.inv();
            Ok((omega_tilde, -omega_tilde * epsilon))
        }
    }
}

/// Characteristic roots of the far-field constant-coefficient equation
/// `i e μ³ + (w + U) μ = 0`: zero plus `±(i (w+U)/e)^{1/2}`.
pub fn far_field_roots(
    w: Complex64,
    e: Complex64,
    far_u: f64,
) -> Result<(Complex64, Complex64), DispersionError> {
    let s = w + far_u;
    if s.norm() < 1e-10 || e.norm() == 0.0 {
        return Err(DispersionError::FarFieldDegenerate);
    }
    let mu = (Complex64::i() * s / e).sqrt();
    if mu.re.abs() < 1e-10 * mu.norm() {
        // Purely oscillatory roots: no decaying direction to select.
        return Err(DispersionError::FarFieldDegenerate);
    }
    Ok((mu, -mu))
}

fn decaying_root(w: Complex64, e: Complex64, far_u: f64) -> Result<Complex64, DispersionError> {
    let (p, m) = far_field_roots(w, e, far_u)?;
    Ok(if p.re < 0.0 { p } else { m })
}

fn adaptive_rtol(e: Complex64) -> f64 {
    // The transported growth exponent scales like |e|^{-1/2}; tighten
    // the tolerance accordingly so the defect's noise floor stays well
    // below the 1e-9 acceptance threshold at small ε.
    (1e-11 * (e.norm() / 2e-3).min(1.0)).max(1e-13)
}

/// Wedge coordinates `(y01, y02, y12)` of the admissible far-field
/// subspace after transport from `y_max` down to `y_end`, together
/// with the total binary exponent removed by overflow rescaling (true
/// state = returned state · 2^scale).
fn transport_wedge_scaled(
    flow: &ShearFlow,
    w: Complex64,
    e: Complex64,
    y_max: f64,
    y_end: f64,
) -> Result<([Complex64; 3], i64), DispersionError> {
    let mu = decaying_root(w, e, flow.params.far_field_u)?;
    // Basis {1, e^{μ(y − y_max)}} at y_max: minors (μ, μ², 0).
    let y0 = [mu, mu * mu, Complex64::new(0.0, 0.0)];
    let i_over_e = -Complex64::i() / e;
    let rhs = |y: f64, s: &[Complex64; 3]| {
        let us = flow.eval(y, 0);
        let usp = flow.eval(y, 1);
        let a0 = i_over_e * usp;
        let a1 = -i_over_e * (w + us);
        [s[1], a1 * s[0] + s[2], -a0 * s[0]]
    };
    let mut removed: i64 = 0;
    let rescale = |_t: f64, s: &mut [Complex64; 3]| {
        let m = s.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        if m > 1e150 || (m < 1e-150 && m > 0.0) {
            let k = m.log2().round() as i32;
            let f = 2f64.powi(-k);
            for c in s.iter_mut() {
                *c *= f;
            }
            removed += k as i64;
        }
    };
    let out = integrate_adaptive(&rhs, y_max, y_end, y0, adaptive_rtol(e), 0.0, rescale)?;
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(DispersionError::StiffnessOverflow);
    }
    Ok((out, removed))
}

/// Wall solution `(v, v', v'')` with `v(0) = v'(0) = 0`, `v''(0) = 1`,
/// integrated up to `y_end`, with its binary scale.
fn wall_solution_scaled(
    flow: &ShearFlow,
    w: Complex64,
    e: Complex64,
    y_end: f64,
) -> Result<([Complex64; 3], i64), DispersionError> {
    let y0 = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    ];
    let i_over_e = -Complex64::i() / e;
    let rhs = |y: f64, s: &[Complex64; 3]| {
        let us = flow.eval(y, 0);
        let usp = flow.eval(y, 1);
        let a0 = i_over_e * usp;
        let a1 = -i_over_e * (w + us);
        [s[1], s[2], a0 * s[0] + a1 * s[1]]
    };
    let mut removed: i64 = 0;
    let rescale = |_t: f64, s: &mut [Complex64; 3]| {
        let m = s.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        if m > 1e150 || (m < 1e-150 && m > 0.0) {
            let k = m.log2().round() as i32;
            let f = 2f64.powi(-k);
            for c in s.iter_mut() {
                *c *= f;
            }
            removed += k as i64;
        }
    };
    let out = integrate_adaptive(&rhs, 0.0, y_end, y0, adaptive_rtol(e), 0.0, rescale)?;
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(DispersionError::StiffnessOverflow);
    }
    Ok((out, removed))
}

/// Matching determinant of the two-sided shoot: far-field admissible
/// pair (in wedge coordinates `p`) meets the wall solution `v` at the
/// critical point, `D = p01·v'' − p02·v' + p12·v`. `D` vanishes iff
/// the wall solution lies in the admissible span, i.e. at an
/// eigenvalue.
fn matching_parts(
    flow: &ShearFlow,
    w: Complex64,
    e: Complex64,
    y_max: f64,
) -> Result<([Complex64; 3], [Complex64; 3], i64), DispersionError> {
    let y_match = flow.params.crit_point_a;
    let (p, kp) = transport_wedge_scaled(flow, w, e, y_max, y_match)?;
    let (v, kv) = wall_solution_scaled(flow, w, e, y_match)?;
    Ok((p, v, kp + kv))
}

fn matching_det(p: &[Complex64; 3], v: &[Complex64; 3]) -> Complex64 {
    p[0] * v[2] - p[1] * v[1] + p[2] * v[0]
}

/// Shooting defect in explicit normal-form coefficients; `e` may be
/// complex (the BVP variant's ε̃ is). Returns the matching determinant
/// normalized by the dominant product `p01·v''`, which makes it
/// scale-free and holomorphic in `w`.
pub fn shoot_normal_form(
    flow: &ShearFlow,
    w: Complex64,
    e: Complex64,
    y_max: f64,
) -> Result<Complex64, DispersionError> {
    let (p, v, _) = matching_parts(flow, w, e, y_max)?;
    let den = p[0] * v[2];
    if den.norm() == 0.0 {
        return Err(DispersionError::StiffnessOverflow);
    }
    Ok(matching_det(&p, &v) / den)
}

/// Boundary-condition defect at `ω`; vanishes on the spectrum.
pub fn shoot_dispersion(
    flow: &ShearFlow,
    epsilon: f64,
    omega: Complex64,
    variant: Variant,
) -> Result<Complex64, DispersionError> {
    let (w, e) = normal_form_coeffs(variant, epsilon, omega)?;
    shoot_normal_form(flow, w, e, 2.0 * flow.params.support_m)
}

/// Implicit eigenvalue equation of the boundary-value variant:
/// `F(z) = z + u_s(a) + (−εz)^{1/2}·(−τ) = 0` with the principal
/// square root; returns `ω = 1/z`.
pub fn solve_omega_bvp(
    flow: &ShearFlow,
    epsilon: f64,
    tau: Complex64,
) -> Result<Complex64, DispersionError> {
    let ua = flow.params.crit_value;
    let f = |z: Complex64| z + ua - (-epsilon * z).sqrt() * tau;
    let fp = |z: Complex64| {
        Complex64::new(1.0, 0.0) - tau * (-epsilon) / ((-epsilon * z).sqrt() * 2.0)
    };
    let mut z = Complex64::new(-ua, 0.0);
    for damping in [1.0, 0.5, 0.25] {
        z = Complex64::new(-ua, 0.0);
        let mut crossed = false;
        for _ in 0..100 {
            let fv = f(z);
            if fv.norm() < 1e-13 {
                break;
            }
            let step = fv / fp(z) * damping;
            let znew = z - step;
            // Principal-branch cut of (−εz)^{1/2} sits on z > 0.
            if (-epsilon * znew).re < 0.0 && ((-epsilon * znew).im.signum() != (-epsilon * z).im.signum())
            {
                crossed = true;
                break;
            }
            z = znew;
            if step.norm() < 1e-15 {
                break;
            }
        }
        if !crossed && f(z).norm() < 1e-12 {
            return Ok(z.inv());
        }
    }
    if f(z).norm() < 1e-12 {
        Ok(z.inv())
    } else {
        Err(DispersionError::BranchCrossing)
    }
}

/// Spatial growth rate σ = |Im τ| / u_s(a)^{3/2}.
pub fn growth_rate_sigma(flow: &ShearFlow, tau: Complex64) -> f64 {
    assert!(tau.im < 0.0, "tau must be on the unstable branch (Im τ < 0)");
    tau.im.abs() / flow.params.crit_value.powf(1.5)
}

/// Matching determinant with its binary scale and the scale-free
/// relative magnitude |D|/(‖p‖·‖v‖), a pole-free merit function.
struct RawDefect {
    det: Complex64,
    scale: i64,
    rel: f64,
}

fn raw_defect(
    flow: &ShearFlow,
    epsilon: f64,
    omega: Complex64,
    variant: Variant,
) -> Result<RawDefect, DispersionError> {
    let (w, e) = normal_form_coeffs(variant, epsilon, omega)?;
    let (p, v, scale) = matching_parts(flow, w, e, 2.0 * flow.params.support_m)?;
    let np = p.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let nv = v.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if np == 0.0 || nv == 0.0 {
        return Err(DispersionError::StiffnessOverflow);
    }
    let det = matching_det(&p, &v);
    Ok(RawDefect {
        det,
        scale,
        rel: det.norm() / (np * nv),
    })
}

/// Damped Newton on the matching determinant. The three evaluations of
/// each finite-difference cluster are brought to a common binary scale
/// before forming the step, so the overflow rescaling cannot corrupt
/// the derivative; progress is measured by the scale-free merit
/// |D|/(‖p‖·‖v‖).
fn newton_matching_det(
    flow: &ShearFlow,
    epsilon: f64,
    variant: Variant,
    start: Complex64,
    step_cap: f64,
) -> Result<(Complex64, f64), DispersionError> {
    let eval = |om: Complex64| raw_defect(flow, epsilon, om, variant);
    let h = 1e-7 * epsilon.sqrt().max(1e-4);
    let mut omega = start;
    let mut cur = eval(omega)?;
    for _ in 0..60 {
        if cur.rel < 1e-13 {
            break;
        }
        let plus = eval(omega + h)?;
        let minus = eval(omega - h)?;
        let base = cur.scale.min(plus.scale).min(minus.scale);
        let adj = |r: &RawDefect| r.det * 2f64.powi((r.scale - base).min(600) as i32);
        let g = adj(&cur);
        let deriv = (adj(&plus) - adj(&minus)) / (2.0 * h);
        if deriv.norm() == 0.0 || !deriv.is_finite() || !g.is_finite() {
            break;
        }
        let mut step = g / deriv;
        if step.norm() > step_cap {
            step *= step_cap / step.norm();
        }
        let mut improved = false;
        for _ in 0..10 {
            if let Ok(cand) = eval(omega - step) {
                if cand.rel < cur.rel {
                    omega -= step;
                    cur = cand;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved || step.norm() < 1e-16 {
            break;
        }
    }
    Ok((omega, cur.rel))
}

/// Newton on the shooting defect. `guess` defaults to the asymptotic
/// prediction from `tau`; when no guess is supplied and the direct
/// solve fails (or lands outside the predicted root's neighborhood),
/// the root is tracked by continuation in ε from a moderate starting
/// value, where the asymptotic prediction is a reliable seed.
pub fn find_unstable_eigenvalue(
    flow: &ShearFlow,
    epsilon: f64,
    variant: Variant,
    tau: Complex64,
    guess: Option<Complex64>,
) -> Result<DispersionResult, DispersionError> {
    let ua = flow.params.crit_value;
    let predict = |eps: f64| -> Result<Complex64, DispersionError> {
        Ok(match variant {
            Variant::Ivp => Complex64::new(-ua, 0.0) + eps.sqrt() * tau,
            Variant::Bvp => solve_omega_bvp(flow, eps, tau)?,
        })
    };
    let predicted = predict(epsilon)?;
    let start = guess.unwrap_or(predicted);

    let solve_at = |eps: f64, s: Complex64| newton_matching_det(flow, eps, variant, s, 0.1 * eps.sqrt());
    let accepted = |om: Complex64, rel: f64, pred: Complex64, eps: f64| {
        rel < 1e-9 && (guess.is_some() || (om - pred).norm() / eps.sqrt() < 1.0)
    };
    // Argmin of the pole-free merit over a grid centered at `c`: the
    // eigenvalue sits in a dip far narrower than the prediction error,
    // so Newton needs a seed inside it.
    let scan_seed = |eps: f64, c: Complex64, half: f64, n: usize| -> Complex64 {
        let pts: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx % n, idx / n);
                c + Complex64::new(
                    half * (-1.2 + 2.0 * i as f64 / (n - 1) as f64),
                    half * (-1.4 + 2.0 * j as f64 / (n - 1) as f64),
                )
            })
            .collect();
        let rels = crate::parallel::map(&pts, |&om| {
            raw_defect(flow, eps, om, variant).map(|r| r.rel).unwrap_or(f64::INFINITY)
        });
        pts[rels
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)]
    };
    let solve_with_scan = |eps: f64| -> Result<(Complex64, f64), DispersionError> {
        let pred = predict(eps)?;
        solve_at(eps, scan_seed(eps, pred, 0.5 * eps.sqrt(), 61))
    };

    let (mut omega, mut rel) = solve_at(epsilon, start)?;
    if !accepted(omega, rel, predicted, epsilon) {
        if guess.is_some() {
            return Err(DispersionError::NewtonDiverged(rel));
        }
        // The asymptotic seed missed the dip: scan for it where the
        // grid can still resolve it, then track the root down to the
        // requested ε by continuation. The normalized offset
        // (ω − prediction)/√ε is extrapolated linearly in √ε from the
        // last two accepted points, which keeps the seed inside the
        // narrow dip even as the dip shrinks with ε.
        let mut eps = epsilon.max(2.5e-3);
        let (mut om_c, rel_c) = solve_with_scan(eps)?;
        if rel_c > 1e-9 {
            return Err(DispersionError::NewtonDiverged(rel_c));
        }
        // Offset history in q = ε^{1/4}, where the offset's leading
        // ε-dependence is linear; quadratic extrapolation through the
        // last three accepted points keeps the seed inside the dip
        // across percent-level ε steps.
        let mut hist: Vec<(f64, Complex64)> = vec![(eps.powf(0.25), (om_c - predict(eps)?) / eps.sqrt())];
        let extrapolate = |hist: &[(f64, Complex64)], q: f64| {
            let pts = &hist[hist.len().saturating_sub(3)..];
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &(qi, oi)) in pts.iter().enumerate() {
                let mut l = 1.0;
                for (j, &(qj, _)) in pts.iter().enumerate() {
                    if i != j && (qi - qj).abs() > 1e-14 {
                        l *= (q - qj) / (qi - qj);
                    }
                }
                acc += oi * l;
            }
            acc
        };
        let mut factor = 0.9f64;
        let mut tries = 0;
        while eps > epsilon * (1.0 + 1e-12) {
            let next = (eps * factor).max(epsilon);
            let s = next.sqrt();
            let seed = predict(next)? + s * extrapolate(&hist, next.powf(0.25));
            let attempt = match solve_at(next, seed) {
                Ok((om_n, rel_n)) if rel_n < 1e-9 => Some(om_n),
                _ if factor > 0.99 => {
                    // Step refinement exhausted and Newton keeps
                    // falling onto the flat background: micro-scan
                    // around the extrapolated seed.
                    match solve_at(next, scan_seed(next, seed, 0.04 * s, 41)) {
                        Ok((om_n, rel_n)) if rel_n < 1e-9 => Some(om_n),
                        _ => None,
                    }
                }
                _ => None,
            };
            match attempt {
                Some(om_n) => {
                    eps = next;
                    om_c = om_n;
                    hist.push((next.powf(0.25), (om_c - predict(next)?) / s));
                    if hist.len() > 3 {
                        hist.remove(0);
                    }
                    factor = (factor * factor).max(0.9);
                    #[cfg(feature = "trace-continuation")]
                    eprintln!("cont eps={next:.4e} om={om_n} ok");
                }
                None => {
                    factor = factor.sqrt();
                    tries += 1;
                    #[cfg(feature = "trace-continuation")]
                    eprintln!("cont eps={next:.4e} FAIL factor->{factor:.5}");
                    if tries > 60 {
                        return Err(DispersionError::NewtonDiverged(rel));
                    }
                }
            }
        }
        omega = om_c;
        rel = raw_defect(flow, epsilon, omega, variant)?.rel;
        if !accepted(omega, rel, predicted, epsilon) {
            return Err(DispersionError::NewtonDiverged(rel));
        }
    }
    let g = shoot_dispersion(flow, epsilon, omega, variant)?;
    if g.norm() > 1e-9 {
        return Err(DispersionError::NewtonDiverged(g.norm()));
    }
    if variant == Variant::Ivp && omega.im > 0.0 {
        return Err(DispersionError::WrongBranch(omega.im));
    }

    let omega_tilde = omega.inv();
    Ok(DispersionResult {
        variant,
        epsilon,
        omega,
        omega_tilde,
        eps_tilde: -omega_tilde * epsilon,
        predicted_omega: predicted,
        defect_norm: g.norm(),
        sigma: match variant {
            Variant::Ivp => tau.im.abs(),
            Variant::Bvp => growth_rate_sigma(flow, tau),
        },
        prediction_error: (omega - predicted).norm() / epsilon.sqrt(),
    })
}

/// Wall values `(v, v', v'')` of the admissible-space member singled
/// out by `v(0) = 0`, from a re-orthonormalized two-frame transport.
/// At an eigenvalue `v'(0)` also vanishes (up to the defect).
pub fn eigenfunction_wall_values(
    flow: &ShearFlow,
    epsilon: f64,
    omega: Complex64,
    variant: Variant,
) -> Result<[Complex64; 3], DispersionError> {
    let (w, e) = normal_form_coeffs(variant, epsilon, omega)?;
    let y_max = 2.0 * flow.params.support_m;
    let mu = decaying_root(w, e, flow.params.far_field_u)?;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    // Frame = two stacked 3-vectors.
    let y0 = [one, zero, zero, one, mu, mu * mu];
    let i_over_e = -Complex64::i() / e;
    let rhs = |y: f64, s: &[Complex64; 6]| {
        let us = flow.eval(y, 0);
        let usp = flow.eval(y, 1);
        let a0 = i_over_e * usp;
        let a1 = -i_over_e * (w + us);
        [
            s[1],
            s[2],
            a0 * s[0] + a1 * s[1],
            s[4],
            s[5],
            a0 * s[3] + a1 * s[4],
        ]
    };
    // Gram–Schmidt after every accepted step keeps the two columns from
    // collapsing onto the dominant direction.
    let orthonormalize = |_t: f64, s: &mut [Complex64; 6]| {
        let n1 = (s[0].norm_sqr() + s[1].norm_sqr() + s[2].norm_sqr()).sqrt();
        if n1 == 0.0 {
            return;
        }
        for k in 0..3 {
            s[k] /= n1;
        }
        let proj = s[0].conj() * s[3] + s[1].conj() * s[4] + s[2].conj() * s[5];
        for k in 0..3 {
            s[3 + k] -= proj * s[k];
        }
        let n2 = (s[3].norm_sqr() + s[4].norm_sqr() + s[5].norm_sqr()).sqrt();
        if n2 > 0.0 {
            for k in 3..6 {
                s[k] /= n2;
            }
        }
    };
    let s = integrate_adaptive(&rhs, y_max, 0.0, y0, 1e-11, 0.0, orthonormalize)?;
    if s.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(DispersionError::StiffnessOverflow);
    }
    // Combination with v(0) = 0 exactly: c = (v2(0), −v1(0)).
    let (c1, c2) = (s[3], -s[0]);
    let mut v = [
        c1 * s[0] + c2 * s[3],
        c1 * s[1] + c2 * s[4],
        c1 * s[2] + c2 * s[5],
    ];
    let norm = (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr()).sqrt();
    if norm == 0.0 {
        return Err(DispersionError::StiffnessOverflow);
    }
    for c in v.iter_mut() {
        *c /= norm;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shear_flow::{ShearFlow, ShearFlowParams};
    use std::f64::consts::FRAC_PI_4;
    use std::sync::OnceLock;

    fn flow() -> &'static ShearFlow {
        static CELL: OnceLock<ShearFlow> = OnceLock::new();
        CELL.get_or_init(|| ShearFlow::build(ShearFlowParams::default()).unwrap())
    }

    /// τ for the default flow's curvature −1: e^{−3iπ/4}/√2 = −0.5 − 0.5i.
    fn tau_default() -> Complex64 {
        Complex64::from_polar(1.0, -3.0 * FRAC_PI_4) / 2f64.sqrt()
    }

    fn solved_ivp(epsilon: f64) -> DispersionResult {
        find_unstable_eigenvalue(flow(), epsilon, Variant::Ivp, tau_default(), None).unwrap()
    }

    #[test]
    #[ignore]
    fn debug_find() {
        for eps in [1e-2, 2.5e-3, 6.25e-4] {
            let t = std::time::Instant::now();
            match find_unstable_eigenvalue(flow(), eps, Variant::Ivp, tau_default(), None) {
                Ok(r) => println!(
                    "eps={eps:.2e}: omega={} err={:.4} defect={:.2e} ({:?})",
                    r.omega,
                    r.prediction_error,
                    r.defect_norm,
                    t.elapsed()
                ),
                Err(e) => println!("eps={eps:.2e}: ERR {e} ({:?})", t.elapsed()),
            }
        }
    }

    #[test]
    fn far_field_root_modulus() {
        // e = 1, w + U real positive: |μ| = |w + U|^{1/2}.
        let (p, m) = far_field_roots(Complex64::new(1.5, 0.0), Complex64::new(1.0, 0.0), 1.0)
            .unwrap();
        assert!((p.norm() - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((p + m).norm() < 1e-12);
    }

    #[test]
    fn far_field_degenerate_rejected() {
        assert!(matches!(
            far_field_roots(Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0), 1.0),
            Err(DispersionError::FarFieldDegenerate)
        ));
    }

    #[test]
    fn defect_nonzero_off_spectrum() {
        let omega = Complex64::new(-flow().params.crit_value + 1.0, 1.0);
        let d = shoot_dispersion(flow(), 1e-2, omega, Variant::Ivp).unwrap();
        assert!(d.norm() > 1e-6, "|defect| = {:.3e}", d.norm());
    }

    #[test]
    fn ivp_eigenvalue_near_prediction() {
        let r = solved_ivp(1e-2);
        assert!(r.defect_norm < 1e-9);
        assert!(r.omega.im < 0.0, "ω = {}", r.omega);
        assert!(
            r.prediction_error < 0.5,
            "|ω − pred|/√ε = {:.3e}",
            r.prediction_error
        );
    }

    #[test]
    fn ivp_prediction_error_decays() {
        let e0 = solved_ivp(1e-2).prediction_error;
        let e1 = solved_ivp(2.5e-3).prediction_error;
        let e2 = solved_ivp(6.25e-4).prediction_error;
        assert!(e0 > e1 && e1 > e2, "errors {e0:.3e}, {e1:.3e}, {e2:.3e}");
    }

    #[test]
    fn bvp_growth_rate_matches_sigma() {
        let r =
            find_unstable_eigenvalue(flow(), 1e-3, Variant::Bvp, tau_default(), None).unwrap();
        assert!(r.defect_norm < 1e-9);
        let rate = r.omega.im / r.epsilon;
        let predicted = r.sigma / r.epsilon.sqrt();
        assert!(
            (rate.abs() - predicted).abs() < 0.15 * predicted,
            "Im ω/ε = {rate:.4}, σ/√ε = {predicted:.4}"
        );
    }

    #[test]
    fn defect_is_holomorphic_in_omega() {
        let om = Complex64::new(-1.3, -0.2);
        let h = 1e-6;
        let d = |o: Complex64| shoot_dispersion(flow(), 1e-2, o, Variant::Ivp).unwrap();
        let fr = (d(om + h) - d(om - h)) / (2.0 * h);
        let fi = (d(om + Complex64::new(0.0, h)) - d(om - Complex64::new(0.0, h))) / (2.0 * h);
        let scale = fr.norm().max(fi.norm());
        assert!(
            (fr + Complex64::i() * fi).norm() / scale < 1e-6,
            "CR residual {:.3e}",
            (fr + Complex64::i() * fi).norm() / scale
        );
    }

    #[test]
    fn y_max_refinement_stable() {
        let r = solved_ivp(1e-2);
        let (w, e) = normal_form_coeffs(Variant::Ivp, 1e-2, r.omega).unwrap();
        // Re-converge with doubled domain.
        let mut omega = r.omega;
        let y_max = 4.0 * flow().params.support_m;
        let eval = |o: Complex64| shoot_normal_form(flow(), o, e, y_max).unwrap();
        let _ = w;
        let h = 1e-8;
        for _ in 0..40 {
            let g = eval(omega);
            if g.norm() < 1e-13 {
                break;
            }
            let deriv = (eval(omega + h) - eval(omega - h)) / (2.0 * h);
            omega -= g / deriv;
        }
        assert!(
            (omega - r.omega).norm() < 1e-8,
            "Δω = {:.3e}",
            (omega - r.omega).norm()
        );
    }

    #[test]
    fn bvp_defect_equals_normal_form_shoot() {
        let om = Complex64::new(-0.7, -0.05);
        let d1 = shoot_dispersion(flow(), 1e-3, om, Variant::Bvp).unwrap();
        let (w, e) = normal_form_coeffs(Variant::Bvp, 1e-3, om).unwrap();
        assert!((w * om - 1.0).norm() < 1e-14);
        assert!((e + w * 1e-3).norm() < 1e-16);
        let d2 = shoot_normal_form(flow(), w, e, 2.0 * flow().params.support_m).unwrap();
        assert!((d1 - d2).norm() < 1e-8 * d1.norm().max(1.0));
    }

    #[test]
    fn argmin_isolation() {
        let r = solved_ivp(1e-2);
        let center = shoot_dispersion(flow(), 1e-2, r.omega, Variant::Ivp).unwrap().norm();
        let radius = 0.05 * 0.1;
        let mut ring_min = f64::INFINITY;
        for i in 0..12 {
            let ang = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
            let om = r.omega + Complex64::from_polar(radius, ang);
            ring_min =
                ring_min.min(shoot_dispersion(flow(), 1e-2, om, Variant::Ivp).unwrap().norm());
        }
        assert!(ring_min > 1e3 * center.max(1e-300), "center {center:.3e}, ring {ring_min:.3e}");
    }

    #[test]
    fn omega_bvp_limit_and_residual() {
        let wide = ShearFlow::build(ShearFlowParams::wide_cap()).unwrap();
        // wide_cap has u_s(a) = 1: ω → −1 as ε → 0.
        let tau = Complex64::from_polar(1.0, -3.0 * FRAC_PI_4)
            * wide.params.curvature.abs().sqrt()
            / 2f64.sqrt();
        let mut prev_gap = f64::INFINITY;
        let mut prev_exp = f64::INFINITY;
        for &eps in &[1e-2, 2.5e-3, 6.25e-4, 1.5625e-4] {
            let omega = solve_omega_bvp(&wide, eps, tau).unwrap();
            let z = omega.inv();
            let f = z + wide.params.crit_value - (-eps * z).sqrt() * tau;
            assert!(f.norm() < 1e-12, "|F| = {:.3e}", f.norm());
            let gap = (omega + 1.0).norm();
            assert!(gap < prev_gap);
            prev_gap = gap;
            // (ω + 1/u_s(a))/√ε → −τ/u_s(a)^{3/2}.
            let lim = (omega + 1.0 / wide.params.crit_value) / eps.sqrt();
            let target = -tau / wide.params.crit_value.powf(1.5);
            let err = (lim - target).norm();
            assert!(err < prev_exp, "expansion error {err:.3e} vs {prev_exp:.3e}");
            prev_exp = err;
        }
    }

    #[test]
    fn sigma_values() {
        let wide = ShearFlow::build(ShearFlowParams::wide_cap()).unwrap();
        assert_eq!(growth_rate_sigma(&wide, Complex64::new(0.0, -0.8)), 0.8);
        let t = tau_default();
        let s = growth_rate_sigma(flow(), t);
        assert!((s - 0.5 / 1.5f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn eigenfunction_wall_conditions() {
        let r = solved_ivp(1e-2);
        let v = eigenfunction_wall_values(flow(), 1e-2, r.omega, Variant::Ivp).unwrap();
        assert!(v[0].norm() < 1e-8, "|v(0)| = {:.3e}", v[0].norm());
        assert!(v[1].norm() < 1e-8, "|v'(0)| = {:.3e}", v[1].norm());
    }
}
