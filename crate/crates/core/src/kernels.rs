//! Closed forms of the fundamental solution, its horizontal normal derivatives
//! and its circular average.

use crate::error::{Error, Result};
use crate::group::HPoint;
use crate::special::hyp2f1_logarithmic;
use num_complex::Complex64;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Gauge distance below which a kernel evaluation counts as hitting its pole.
pub const POLE_EPS: f64 = 1e-10;

/// `a_0 = 2^{n-2} Γ(n/2)² / π^{n+1}`.
pub fn a0_constant(n: usize) -> f64 {
    let g = gamma(n as f64 / 2.0);
    2f64.powi(n as i32 - 2) * g * g / PI.powi(n as i32 + 1)
}

fn dims(eta: &HPoint, xi: &HPoint) -> Result<usize> {
    if eta.n() != xi.n() {
        return Err(Error::DimensionMismatch { expected: eta.n(), found: xi.n() });
    }
    Ok(eta.n())
}

fn dot_conj(z: &[Complex64], w: &[Complex64]) -> Complex64 {
    z.iter().zip(w).map(|(a, b)| a * b.conj()).sum()
}

/// `Q = |z - z'|² + i(t - t' + 2 Im(z·z̄'))`, so that `|Q| = N(η^{-1}ξ)²`.
pub fn pole_form(eta: &HPoint, xi: &HPoint) -> Complex64 {
    let d2: f64 = xi.z.iter().zip(&eta.z).map(|(a, b)| (a - b).norm_sqr()).sum();
    Complex64::new(d2, xi.t - eta.t + 2.0 * dot_conj(&xi.z, &eta.z).im)
}

fn check_pole(q: Complex64) -> Result<()> {
    let d = q.norm().sqrt();
    if d < POLE_EPS {
        return Err(Error::Pole { distance: d, threshold: POLE_EPS });
    }
    Ok(())
}

/// `g_η(ξ) = a_0 N(η^{-1}ξ)^{-2n}`.
pub fn fundamental_solution(eta: &HPoint, xi: &HPoint) -> Result<f64> {
    let n = dims(eta, xi)?;
    let q = pole_form(eta, xi);
    check_pole(q)?;
    Ok(a0_constant(n) * q.norm().powi(-(n as i32)))
}

/// `∂⊥` in `ξ` of `g_η(ξ)`:
/// `-(n a_0 / |z|) |Q|^{-n-2} Re(Ā Q (2|z|² - 2 z·z̄'))`, `A = |z|² + it`.
pub fn fundamental_normal_derivative(eta: &HPoint, xi: &HPoint) -> Result<f64> {
    let n = dims(eta, xi)?;
    let q = pole_form(eta, xi);
    check_pole(q)?;
    let s = xi.abs_z2();
    if s == 0.0 {
        return Err(Error::Characteristic { abs_z: 0.0, threshold: 0.0 });
    }
    let abar = Complex64::new(s, -xi.t);
    let p = 2.0 * dot_conj(&xi.z, &eta.z);
    let w = q.norm_sqr();
    let re = (abar * q * (2.0 * s - p)).re;
    Ok(-(n as f64) * a0_constant(n) / s.sqrt() * w.powf(-(n as f64) / 2.0 - 1.0) * re)
}

/// `∂⊥` in the pole variable `η` of `g_η(ξ)`:
/// `-(n a_0 / |z'|) |Q|^{-n-2} Re(Ā' Q̄ (2|z'|² - 2 z'·z̄))`.
pub fn fundamental_normal_derivative_pole(eta: &HPoint, xi: &HPoint) -> Result<f64> {
    let n = dims(eta, xi)?;
    let q = pole_form(eta, xi);
    check_pole(q)?;
    let s = eta.abs_z2();
    if s == 0.0 {
        return Err(Error::Characteristic { abs_z: 0.0, threshold: 0.0 });
    }
    let abar = Complex64::new(s, -eta.t);
    let p = 2.0 * dot_conj(&eta.z, &xi.z);
    let w = q.norm_sqr();
    let re = (abar * q.conj() * (2.0 * s - p)).re;
    Ok(-(n as f64) * a0_constant(n) / s.sqrt() * w.powf(-(n as f64) / 2.0 - 1.0) * re)
}

/// `ḡ_η(ξ) = a_0 |C|^{-n} F(n/2, n/2; n; |P|²/|C|²)`, the average of `g_η`
/// over the rotations `z ↦ e^{iθ}z` of `ξ`.
pub fn averaged_fundamental(eta: &HPoint, xi: &HPoint) -> Result<f64> {
    let n = dims(eta, xi)?;
    let (s, sp) = (xi.abs_z2(), eta.abs_z2());
    let dt = xi.t - eta.t;
    let c2 = (s + sp) * (s + sp) + dt * dt;
    // |C|² - |P|² = (s - s')² + 4 Σ_{j<k} |z_j z'_k - z_k z'_j|² + (t - t')²
    let mut cross = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            cross += (xi.z[j] * eta.z[k] - xi.z[k] * eta.z[j]).norm_sqr();
        }
    }
    let gap = (s - sp) * (s - sp) + 4.0 * cross + dt * dt;
    if gap.sqrt().sqrt() < POLE_EPS {
        return Err(Error::Pole { distance: gap.sqrt().sqrt(), threshold: POLE_EPS });
    }
    let y = gap / c2;
    let x = (4.0 * dot_conj(&xi.z, &eta.z).norm_sqr() / c2).min(1.0 - y);
    let a = n as f64 / 2.0;
    let (f, _) = hyp2f1_logarithmic(a, a, x, y)?;
    Ok(a0_constant(n) * c2.powf(-a) * f)
}

/// Value and `(∂_s, ∂_t)` in the `ξ` variables of `ḡ` on `H_1`, written in
/// `s = |z|²`, `t` for the pole `(s', t')` and the point `(s, t)`.
pub fn averaged_fundamental_h1(sp: f64, tp: f64, s: f64, t: f64) -> Result<(f64, f64, f64)> {
    let dt = t - tp;
    let d = (s + sp) * (s + sp) + dt * dt;
    let gap = (s - sp) * (s - sp) + dt * dt;
    if gap.sqrt().sqrt() < POLE_EPS {
        return Err(Error::Pole { distance: gap.sqrt().sqrt(), threshold: POLE_EPS });
    }
    let y = gap / d;
    let x = (4.0 * s * sp / d).min(1.0 - y);
    let (f, df) = hyp2f1_logarithmic(0.5, 0.5, x, y)?;
    let a0 = a0_constant(1);
    let root = d.sqrt();
    let g = a0 * f / root;
    let x_s = 4.0 * sp * ((sp - s) * (sp + s) + dt * dt) / (d * d);
    let x_t = -8.0 * s * sp * dt / (d * d);
    let g_s = a0 / root * (-(s + sp) / d * f + df * x_s);
    let g_t = a0 / root * (-dt / d * f + df * x_t);
    Ok((g, g_s, g_t))
}

/// `∂⊥` in `ξ` of `ḡ` on `H_1`; for circular functions
/// `∂⊥ f = 2|z| (s f_s + t f_t)`.
pub fn averaged_normal_derivative_h1(sp: f64, tp: f64, s: f64, t: f64) -> Result<f64> {
    let (_, gs, gt) = averaged_fundamental_h1(sp, tp, s, t)?;
    Ok(2.0 * s.sqrt() * (s * gs + t * gt))
}

/// `∂⊥` in the pole variable of `ḡ` on `H_1`.
pub fn averaged_normal_derivative_pole_h1(sp: f64, tp: f64, s: f64, t: f64) -> Result<f64> {
    let (_, gs, gt) = averaged_fundamental_h1(s, t, sp, tp)?;
    Ok(2.0 * sp.sqrt() * (sp * gs + tp * gt))
}
