//! Numerical laboratory for the instability mechanisms of the linearized
//! Prandtl equation around non-monotonic shear flows.
//!
//! The crate is organized around the objects of the underlying analysis:
//!
//! * [`shear_flow`] — piecewise-polynomial background profiles with a
//!   non-degenerate interior maximum, exact near-wall linearity and
//!   compactly supported deviation from the far field.
//! * [`shear_layer`] — the rescaled connection problem for the critical
//!   layer profile: the complex eigenvalue `τ̃` and the profiles `W̃`,
//!   `Ṽ`, `V` along (possibly rotated) rays.
//! * [`dispersion`] — shooting eigenvalue solves for the Fourier-side
//!   spectral problems (IVP and BVP variants) and the implicit
//!   eigenvalue equation of the BVP scaling.
//! * [`quasimode`] — assembly of the approximate solutions, residual
//!   measurement under the linearized operator and weighted Sobolev
//!   norms.
//! * [`ivp`] — per-wavenumber time stepping of the linearized system,
//!   growth-rate measurement and the Gronwall energy monitor.
//! * [`bvp`] — the multiplier operators `L`, `L'`, the representation
//!   formula inverting `L`, and the x-marching scheme they induce for
//!   the time-periodic boundary value problem.
//! * [`experiments`] — reproducible experiment driver: configs, the
//!   canonical experiment set, CSV/JSON outputs and golden comparison.
//!
//! With the default `parallel` feature, embarrassingly parallel sweeps
//! (eigenvalue scans, ε and k sweeps, randomized corpora) fan out with
//! rayon; disabling the feature falls back to sequential loops with
//! identical results.

pub mod dispersion;
pub mod ivp;
pub mod parallel;
pub mod quasimode;
pub mod shear_flow;
pub mod shear_layer;
pub mod util;

pub use num_complex::Complex64;
