//! Time evolution of single Fourier modes of the linearized problem,
//! growth-rate measurement, and the discrete energy inequality.
//!
//! For each wavenumber `k` the tangential field mode `ŵ_k(t, y)`
//! solves
//!
//! ```text
//! ∂_t ŵ + ik u_s ŵ − ik u_s' ∫₀^y ŵ dy' − ∂²_y ŵ = 0,    ŵ(t, 0) = 0,
//! ```
//!
//! the nonlocal term coming from the normal velocity slaved by
//! incompressibility. In the sign convention used throughout the crate
//! (unstable spectrum at `Im ω < 0`), separated solutions at positive
//! `k` are `e^{ikωt}·U(y)` with `ω` from [`crate::dispersion`]; the
//! unstable branch `ω = −u_s(a) + τ/√k` grows like `e^{|Im τ|√k·t}`.
//!
//! Discretization: uniform grid on `[0, Y_max]`, Dirichlet at the wall,
//! homogeneous Neumann closure at the top (the profiles decay; the tail
//! mass is monitored). The stiff diffusion **and** the oscillatory
//! diagonal transport `ik u_s ŵ` are advanced by Crank–Nicolson (the
//! trapezoidal growth factor has unit modulus on imaginary spectrum, so
//! no spurious damping or growth at large `k`); the bounded nonlocal
//! term is handled by a trapezoidal predictor–corrector pass. A fully
//! explicit transport term would need `dt ≪ k^{−3/2}` for the growth
//! rate to survive the `O(dt²|kω|³)` amplitude bias of the stability
//! function; the semi-implicit form only needs `dt·k` small.

use num_complex::Complex64;
use thiserror::Error;

use crate::shear_flow::ShearFlow;
use crate::util::{fd, fit, prefix_trapezoid, solve_tridiagonal, trapezoid_real};

/// Default number of wall-normal grid nodes.
pub const DEFAULT_IVP_POINTS: usize = 2048;
/// Hard step budget: `dt ≤ CFL_BUDGET / (|k|·sup u_s)`.
pub const CFL_BUDGET: f64 = 0.25;
/// Default step fraction used by [`run_ivp`] (accuracy, not stability:
/// keeps the `O((dt·k|ω|)³)` Crank–Nicolson amplitude bias below 1%).
pub const DEFAULT_STEP_FRACTION: f64 = 0.05;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum IvpError {
    #[error("dt = {dt:.3e} exceeds the stability budget {budget:.3e}")]
    CflViolation { dt: f64, budget: f64 },
    #[error("growth fit residual {residual:.3e} exceeds 10% of the total log change {change:.3e}")]
    FitUnstable { residual: f64, change: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Per-step norm records of a trajectory.
#[derive(Debug, Clone, Default)]
pub struct NormsHistory {
    pub t: Vec<f64>,
    pub l2: Vec<f64>,
    pub h1_seminorm: Vec<f64>,
}

/// State of one Fourier mode on the uniform wall-normal grid
/// `y_i = i·h`.
#[derive(Debug, Clone)]
pub struct ModeState {
    pub k: f64,
    pub t: f64,
    pub h: f64,
    pub w_hat: Vec<Complex64>,
    /// Cached trapezoidal prefix integral `∫₀^y ŵ`.
    pub cumulative_integral: Vec<Complex64>,
    pub norms_history: NormsHistory,
}

impl ModeState {
    /// Wraps initial data; enforces the wall Dirichlet condition and
    /// caches the prefix integral and initial norms.
    pub fn new(k: f64, h: f64, w_hat: Vec<Complex64>) -> Result<Self, IvpError> {
        if w_hat.len() < 8 || h <= 0.0 {
            return Err(IvpError::InvalidInput("need h > 0 and at least 8 samples".into()));
        }
        if w_hat[0].norm() > 1e-12 * (1.0 + max_norm(&w_hat)) {
            return Err(IvpError::InvalidInput(format!(
                "initial data violates ŵ(0) = 0: |ŵ(0)| = {:.3e}",
                w_hat[0].norm()
            )));
        }
        let mut state = Self {
            k,
            t: 0.0,
            h,
            cumulative_integral: prefix_trapezoid(&w_hat, h),
            w_hat,
            norms_history: NormsHistory::default(),
        };
        state.w_hat[0] = ZERO;
        state.record_norms();
        Ok(state)
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.w_hat.iter().map(|c| c.norm_sqr()).collect();
        trapezoid_real(&sq, self.h).sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        let d = fd::derivative(&self.w_hat, self.h);
        let sq: Vec<f64> = d.iter().map(|c| c.norm_sqr()).collect();
        trapezoid_real(&sq, self.h).sqrt()
    }

    /// Fraction of the L² mass in the top 10% of the domain.
    pub fn tail_fraction(&self) -> f64 {
        let n = self.w_hat.len();
        let start = n - n / 10;
        let total = self.l2_norm();
        if total == 0.0 {
            return 0.0;
        }
        let sq: Vec<f64> = self.w_hat[start..].iter().map(|c| c.norm_sqr()).collect();
        trapezoid_real(&sq, self.h).sqrt() / total
    }

    fn record_norms(&mut self) {
        self.norms_history.t.push(self.t);
        self.norms_history.l2.push(self.l2_norm());
        self.norms_history.h1_seminorm.push(self.h1_seminorm());
    }
}

fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Precomputed coefficients for repeated stepping at fixed `dt`.
struct Stepper {
    k: f64,
    dt: f64,
    h: f64,
    us_prime: Vec<f64>,
    /// Tridiagonal factors of `I − (dt/2)(∂²_y − ik u_s)`.
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    upper: Vec<Complex64>,
    /// Stencil of `I + (dt/2)(∂²_y − ik u_s)` (same sparsity).
    p_lower: Vec<Complex64>,
    p_diag: Vec<Complex64>,
    p_upper: Vec<Complex64>,
}

impl Stepper {
    fn new(flow: &ShearFlow, k: f64, h: f64, n: usize, dt: f64) -> Result<Self, IvpError> {
        let budget = if k == 0.0 {
            f64::INFINITY
        } else {
            CFL_BUDGET / (k.abs() * flow.sup_speed())
        };
        if dt > budget {
            return Err(IvpError::CflViolation { dt, budget });
        }
        let us: Vec<f64> = (0..n).map(|i| flow.eval(i as f64 * h, 0)).collect();
        let us_prime: Vec<f64> = (0..n).map(|i| flow.eval(i as f64 * h, 1)).collect();
        let r = dt / (2.0 * h * h);
        let mut lower = vec![ZERO; n];
        let mut diag = vec![ZERO; n];
        let mut upper = vec![ZERO; n];
        let mut p_lower = vec![ZERO; n];
        let mut p_diag = vec![ZERO; n];
        let mut p_upper = vec![ZERO; n];
        // Dirichlet row at the wall.
        diag[0] = Complex64::new(1.0, 0.0);
        for i in 1..n {
            let s = I * (k * us[i]) * (dt / 2.0);
            if i + 1 < n {
                lower[i] = Complex64::new(-r, 0.0);
                upper[i] = Complex64::new(-r, 0.0);
                diag[i] = Complex64::new(1.0 + 2.0 * r, 0.0) + s;
                p_lower[i] = Complex64::new(r, 0.0);
                p_upper[i] = Complex64::new(r, 0.0);
                p_diag[i] = Complex64::new(1.0 - 2.0 * r, 0.0) - s;
            } else {
                // Homogeneous Neumann closure at the top.
                lower[i] = Complex64::new(-2.0 * r, 0.0);
                diag[i] = Complex64::new(1.0 + 2.0 * r, 0.0) + s;
                p_lower[i] = Complex64::new(2.0 * r, 0.0);
                p_diag[i] = Complex64::new(1.0 - 2.0 * r, 0.0) - s;
            }
        }
        Ok(Self { k, dt, h, us_prime, lower, diag, upper, p_lower, p_diag, p_upper })
    }

    /// Nonlocal term `ik u_s' ∫₀^y w`.
    fn nonlocal(&self, w: &[Complex64]) -> Vec<Complex64> {
        let prefix = prefix_trapezoid(w, self.h);
        prefix
            .iter()
            .zip(&self.us_prime)
            .map(|(&p, &usp)| I * (self.k * usp) * p)
            .collect()
    }

    fn advance(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = w.len();
        // Explicit half: (I + dt/2 (∂² − ik u_s)) w.
        let mut base = vec![ZERO; n];
        for i in 1..n {
            base[i] = self.p_diag[i] * w[i] + self.p_lower[i] * w[i - 1];
            if i + 1 < n {
                base[i] += self.p_upper[i] * w[i + 1];
            }
        }
        let nl0 = self.nonlocal(w);
        // Predictor: explicit Euler on the nonlocal term.
        let rhs: Vec<Complex64> =
            (0..n).map(|i| base[i] + self.dt * nl0[i]).collect();
        let pred = solve_tridiagonal(&self.lower, &self.diag, &self.upper, &rhs);
        // Corrector: trapezoidal average of the nonlocal term.
        let nl1 = self.nonlocal(&pred);
        let rhs: Vec<Complex64> =
            (0..n).map(|i| base[i] + self.dt / 2.0 * (nl0[i] + nl1[i])).collect();
        let mut next = solve_tridiagonal(&self.lower, &self.diag, &self.upper, &rhs);
        next[0] = ZERO;
        next
    }
}

/// Advances one step; see the module docs for the scheme.
pub fn step(flow: &ShearFlow, state: &ModeState, dt: f64) -> Result<ModeState, IvpError> {
    let stepper = Stepper::new(flow, state.k, state.h, state.w_hat.len(), dt)?;
    let mut next = state.clone();
    next.w_hat = stepper.advance(&state.w_hat);
    next.cumulative_integral = prefix_trapezoid(&next.w_hat, next.h);
    next.t += dt;
    next.record_norms();
    Ok(next)
}

/// A completed trajectory.
#[derive(Debug, Clone)]
pub struct IvpRun {
    pub state: ModeState,
    pub dt: f64,
    pub steps: usize,
    /// Largest top-of-domain L² mass fraction seen along the run
    /// (truncation-quality monitor; should stay ≪ 1).
    pub max_tail_fraction: f64,
}

/// Evolves `initial` under the mode-`k` system up to `t_final` with the
/// default step choice, recording norms each step.
pub fn run_ivp(
    flow: &ShearFlow,
    k: f64,
    initial: Vec<Complex64>,
    h: f64,
    t_final: f64,
) -> Result<IvpRun, IvpError> {
    let dt = if k == 0.0 {
        t_final / 400.0
    } else {
        (DEFAULT_STEP_FRACTION / (k.abs() * flow.sup_speed())).min(t_final / 200.0)
    };
    run_ivp_with(flow, k, initial, h, t_final, dt)
}

/// [`run_ivp`] with an explicit step size.
pub fn run_ivp_with(
    flow: &ShearFlow,
    k: f64,
    initial: Vec<Complex64>,
    h: f64,
    t_final: f64,
    dt: f64,
) -> Result<IvpRun, IvpError> {
    if t_final <= 0.0 || dt <= 0.0 {
        return Err(IvpError::InvalidInput("need t_final > 0 and dt > 0".into()));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let mut state = ModeState::new(k, h, initial)?;
    let stepper = Stepper::new(flow, k, h, state.w_hat.len(), dt)?;
    let mut max_tail = state.tail_fraction();
    for _ in 0..steps {
        state.w_hat = stepper.advance(&state.w_hat);
        state.t += dt;
        state.record_norms();
        max_tail = max_tail.max(state.tail_fraction());
    }
    state.cumulative_integral = prefix_trapezoid(&state.w_hat, state.h);
    Ok(IvpRun { state, dt, steps, max_tail_fraction: max_tail })
}

/// Energy-inequality report; see [`energy_monitor`].
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub checked: usize,
    pub violations: usize,
    /// Smallest normalized margin `(rhs + slack − lhs)/(rhs + slack)`.
    pub worst_margin: f64,
    /// Largest ratio `‖ŵ(t)‖ / (e^{C_s|k|t}‖ŵ(0)‖)` (Gronwall check).
    pub envelope_factor: f64,
}

/// Per-step check of the discrete energy inequality
/// `(1/2)Δ‖ŵ‖²/Δt + ‖∂_yŵ‖² ≤ C_s|k|·‖ŵ‖²` with `C_s` from
/// [`ShearFlow::energy_constant`], allowing `O(dt)` discretization
/// slack `dt·(C_s|k|)²·‖ŵ‖²`, plus the integrated Gronwall envelope.
pub fn energy_monitor(flow: &ShearFlow, k: f64, history: &NormsHistory) -> EnergyReport {
    let cs = flow.energy_constant();
    let rate = cs * k.abs();
    let mut violations = 0;
    let mut worst: f64 = 1.0;
    let n = history.t.len();
    for i in 1..n {
        let dt = history.t[i] - history.t[i - 1];
        let e0 = history.l2[i - 1] * history.l2[i - 1];
        let e1 = history.l2[i] * history.l2[i];
        let grad = history.h1_seminorm[i] * history.h1_seminorm[i];
        let lhs = 0.5 * (e1 - e0) / dt + grad;
        let e_max = e0.max(e1);
        let rhs = rate * e_max + dt * rate * rate * e_max + 1e-30;
        let margin = (rhs - lhs) / rhs;
        if margin < 0.0 {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    let mut envelope: f64 = 0.0;
    if n > 0 && history.l2[0] > 0.0 {
        for i in 0..n {
            let bound = (rate * history.t[i]).exp() * history.l2[0];
            envelope = envelope.max(history.l2[i] / bound);
        }
    }
    EnergyReport {
        checked: n.saturating_sub(1),
        violations,
        worst_margin: worst,
        envelope_factor: envelope,
    }
}

/// Least-squares exponential rate of `‖ŵ(t)‖` after discarding the
/// leading `discard` fraction of the samples (initial transient).
/// Returns `(rate, rms log-residual)`; the fit is rejected when the
/// residual exceeds 10% of the total log change over the window.
pub fn measure_growth_rate(
    history: &NormsHistory,
    discard: f64,
) -> Result<(f64, f64), IvpError> {
    let n = history.t.len();
    if n < 8 {
        return Err(IvpError::InvalidInput("history too short for a rate fit".into()));
    }
    let start = ((n as f64) * discard.clamp(0.0, 0.9)) as usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in start..n {
        if history.l2[i] <= 0.0 {
            return Err(IvpError::InvalidInput("log fit on a vanishing norm".into()));
        }
        xs.push(history.t[i]);
        ys.push(history.l2[i].ln());
    }
    let (slope, intercept, _) = fit::linear_fit(&xs, &ys);
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    let change = (slope * (xs[xs.len() - 1] - xs[0])).abs();
    if rms > 0.1 * change + 1e-12 {
        return Err(IvpError::FitUnstable { residual: rms, change });
    }
    Ok((slope, rms))
}

/// Linear resampling of a profile from one monotone grid onto another
/// (clamped at the ends).
pub fn resample_profile(
    src_y: &[f64],
    src_f: &[Complex64],
    dst_y: &[f64],
) -> Vec<Complex64> {
    assert_eq!(src_y.len(), src_f.len());
    dst_y
        .iter()
        .map(|&y| {
            let idx = match src_y.binary_search_by(|a| a.total_cmp(&y)) {
                Ok(i) => return src_f[i],
                Err(i) => i,
            };
            if idx == 0 {
                return src_f[0];
            }
            if idx >= src_y.len() {
                return src_f[src_y.len() - 1];
            }
            let (y0, y1) = (src_y[idx - 1], src_y[idx]);
            let t = (y - y0) / (y1 - y0);
            src_f[idx - 1] * (1.0 - t) + src_f[idx] * t
        })
        .collect()
}
