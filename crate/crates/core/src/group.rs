//! Group law, gauge norm, dilations, inversion and the polar chart of H_1.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

/// A point `[z, t]` of the Heisenberg group `H_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub z: Vec<Complex64>,
    pub t: f64,
}

impl HPoint {
    pub fn new(z: Vec<Complex64>, t: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if !t.is_finite() || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { z, t })
    }

    /// Point of `H_1`. Coordinates are assumed finite.
    pub fn h1(z: Complex64, t: f64) -> Self {
        Self { z: vec![z], t }
    }

    pub fn identity(n: usize) -> Self {
        Self { z: vec![Complex64::new(0.0, 0.0); n], t: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// `|z|^2`.
    pub fn abs_z2(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn abs_z(&self) -> f64 {
        self.abs_z2().sqrt()
    }

    /// `(|z|^4 + t^2)^{1/4}`.
    pub fn gauge_norm(&self) -> f64 {
        let s = self.abs_z2();
        (s * s + self.t * self.t).sqrt().sqrt()
    }

    /// `ς = t + i|z|^2`.
    pub fn varsigma(&self) -> Complex64 {
        Complex64::new(self.t, self.abs_z2())
    }

    /// Rotation `[e^{iθ} z, t]`.
    pub fn rotate(&self, theta: f64) -> Self {
        let w = Complex64::from_polar(1.0, theta);
        Self { z: self.z.iter().map(|c| c * w).collect(), t: self.t }
    }

    /// Dilation `δ_λ[z, t] = [λz, λ²t]`.
    pub fn dilate(&self, lambda: f64) -> Self {
        Self { z: self.z.iter().map(|c| c * lambda).collect(), t: lambda * lambda * self.t }
    }

    fn check_dim(&self, other: &HPoint) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: other.n() });
        }
        Ok(())
    }
}

/// `Im(z · z̄')`.
pub(crate) fn im_dot(z: &[Complex64], w: &[Complex64]) -> f64 {
    z.iter().zip(w).map(|(a, b)| (a * b.conj()).im).sum()
}

pub fn group_mul(p: &HPoint, q: &HPoint) -> Result<HPoint> {
    p.check_dim(q)?;
    let z = p.z.iter().zip(&q.z).map(|(a, b)| a + b).collect();
    Ok(HPoint { z, t: p.t + q.t + 2.0 * im_dot(&p.z, &q.z) })
}

pub fn inverse(p: &HPoint) -> HPoint {
    HPoint { z: p.z.iter().map(|c| -c).collect(), t: -p.t }
}

pub fn gauge_norm(p: &HPoint) -> f64 {
    p.gauge_norm()
}

/// Gauge distance `N(p^{-1} q)`.
pub fn gauge_distance(p: &HPoint, q: &HPoint) -> Result<f64> {
    Ok(group_mul(&inverse(p), q)?.gauge_norm())
}

/// The inversion `h([z,t]) = [-z/(|z|^2 - it), -t/(|z|^4 + t^2)]`.
pub fn inversion(p: &HPoint) -> Result<HPoint> {
    let s = p.abs_z2();
    let d = s * s + p.t * p.t;
    if d == 0.0 {
        return Err(Error::PoleAtIdentity);
    }
    let a = Complex64::new(s, -p.t);
    Ok(HPoint { z: p.z.iter().map(|c| -c / a).collect(), t: -p.t / d })
}

/// Coordinates `(r, φ, α)` of the polar chart on `H_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    pub r: f64,
    pub phi: f64,
    pub alpha: f64,
}

/// Direction of [`polar_h1`].
#[derive(Debug, Clone, PartialEq)]
pub enum PolarMap {
    To(Polar),
    From(HPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolarImage {
    Point(HPoint),
    Coords(Polar),
}

/// `ρ = r cos^{1/2}α`, `t = r² sin α`, `θ = φ + tan α · log(r/a)`, and its inverse.
pub fn polar_h1(map: PolarMap, a: f64) -> Result<PolarImage> {
    match map {
        PolarMap::To(c) => polar_to_point(c, a).map(PolarImage::Point),
        PolarMap::From(p) => point_to_polar(&p, a).map(PolarImage::Coords),
    }
}

pub fn polar_to_point(c: Polar, a: f64) -> Result<HPoint> {
    if !(c.alpha > -FRAC_PI_2 && c.alpha < FRAC_PI_2) {
        return Err(Error::AlphaOutOfRange(c.alpha));
    }
    let rho = c.r * c.alpha.cos().sqrt();
    let theta = c.phi + c.alpha.tan() * (c.r / a).ln();
    Ok(HPoint::h1(Complex64::from_polar(rho, theta), c.r * c.r * c.alpha.sin()))
}

pub fn point_to_polar(p: &HPoint, a: f64) -> Result<Polar> {
    if p.n() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: p.n() });
    }
    let r = p.gauge_norm();
    if r == 0.0 {
        return Err(Error::PoleAtIdentity);
    }
    let alpha = p.t.atan2(p.abs_z2());
    if !(alpha > -FRAC_PI_2 && alpha < FRAC_PI_2) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let theta = p.z[0].arg();
    let phi = (theta - alpha.tan() * (r / a).ln()).rem_euclid(TAU);
    Ok(Polar { r, phi, alpha })
}
