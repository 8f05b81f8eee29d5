//! Left-invariant vector fields and the operators built from them, applied by
//! central finite differences.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::{inversion, HPoint};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Step and order of the central stencils.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilParams {
    pub h: f64,
    pub order: u8,
}

impl StencilParams {
    pub fn new(h: f64, order: u8) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidStencil(format!("h = {h} must be positive")));
        }
        if order != 2 && order != 4 {
            return Err(Error::InvalidStencil(format!("order = {order} must be 2 or 4")));
        }
        Ok(Self { h, order })
    }

    fn taps(&self) -> &'static [(f64, f64)] {
        match self.order {
            2 => &[(-1.0, -0.5), (1.0, 0.5)],
            _ => &[(-2.0, 1.0 / 12.0), (-1.0, -2.0 / 3.0), (1.0, 2.0 / 3.0), (2.0, -1.0 / 12.0)],
        }
    }

    fn one_sided_taps(&self) -> &'static [(f64, f64)] {
        match self.order {
            2 => &[(1.0, -2.5), (2.0, 4.0), (3.0, -1.5)],
            _ => &[
                (1.0, -77.0 / 12.0),
                (2.0, 107.0 / 6.0),
                (3.0, -19.5),
                (4.0, 61.0 / 6.0),
                (5.0, -25.0 / 12.0),
            ],
        }
    }
}

impl Default for StencilParams {
    fn default() -> Self {
        Self { h: 1e-3, order: 2 }
    }
}

/// Left-invariant fields; indices `j` are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorField {
    X(usize),
    Y(usize),
    T,
    Z(usize),
    Zbar(usize),
}

/// Euclidean displacement `(dz, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub dz: Vec<Complex64>,
    pub dt: f64,
}

impl Direction {
    /// `p + s·(dz, dt)` in Euclidean coordinates.
    pub fn shift(&self, p: &HPoint, s: f64) -> HPoint {
        HPoint {
            z: p.z.iter().zip(&self.dz).map(|(a, b)| a + b * s).collect(),
            t: p.t + self.dt * s,
        }
    }
}

type Eval<'a> = &'a (dyn Fn(&HPoint) -> Result<Complex64> + Sync);

fn directional(f: Eval, p: &HPoint, d: &Direction, s: &StencilParams) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for &(k, w) in s.taps() {
        acc += w * f(&d.shift(p, k * s.h))?;
    }
    Ok(acc / s.h)
}

fn real_field_direction(which: VectorField, p: &HPoint) -> Result<Direction> {
    let n = p.n();
    let mut dz = vec![Complex64::new(0.0, 0.0); n];
    let check = |j: usize| {
        if j >= n {
            Err(Error::DimensionMismatch { expected: n, found: j + 1 })
        } else {
            Ok(())
        }
    };
    let dt = match which {
        VectorField::X(j) => {
            check(j)?;
            dz[j] = Complex64::new(1.0, 0.0);
            2.0 * p.z[j].im
        }
        VectorField::Y(j) => {
            check(j)?;
            dz[j] = I;
            -2.0 * p.z[j].re
        }
        VectorField::T => 1.0,
        _ => unreachable!("complex fields are assembled from X and Y"),
    };
    Ok(Direction { dz, dt })
}

fn field_on(which: VectorField, f: Eval, p: &HPoint, s: &StencilParams) -> Result<Complex64> {
    match which {
        VectorField::Z(j) | VectorField::Zbar(j) => {
            let x = field_on(VectorField::X(j), f, p, s)?;
            let y = field_on(VectorField::Y(j), f, p, s)?;
            Ok(match which {
                VectorField::Z(_) => 0.5 * (x - I * y),
                _ => 0.5 * (x + I * y),
            })
        }
        real => directional(f, p, &real_field_direction(real, p)?, s),
    }
}

/// Finite-difference value of `V f` at `p`.
pub fn apply_field(which: VectorField, f: &ScalarField, p: &HPoint, s: &StencilParams) -> Result<Complex64> {
    field_on(which, &|q| f.eval(q), p, s)
}

fn second(which: VectorField, f: Eval, p: &HPoint, s: &StencilParams) -> Result<Complex64> {
    let inner = |q: &HPoint| field_on(which, f, q, s);
    field_on(which, &inner, p, s)
}

/// `L_0 f = (1/4) Σ_j (X_j² + Y_j²) f`.
pub fn sublaplacian_l0(f: &ScalarField, p: &HPoint, s: &StencilParams) -> Result<Complex64> {
    sublaplacian_of(&|q| f.eval(q), p, s)
}

pub(crate) fn sublaplacian_of(f: Eval, p: &HPoint, s: &StencilParams) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..p.n() {
        acc += second(VectorField::X(j), f, p, s)?;
        acc += second(VectorField::Y(j), f, p, s)?;
    }
    Ok(0.25 * acc)
}

/// `(X_1 f, Y_1 f, X_2 f, Y_2 f, …)`.
pub fn horizontal_gradient(f: &ScalarField, p: &HPoint, s: &StencilParams) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(2 * p.n());
    for j in 0..p.n() {
        out.push(apply_field(VectorField::X(j), f, p, s)?);
        out.push(apply_field(VectorField::Y(j), f, p, s)?);
    }
    Ok(out)
}

/// `‖∇_0 f‖`.
pub fn horizontal_gradient_norm(f: &ScalarField, p: &HPoint, s: &StencilParams) -> Result<f64> {
    Ok(horizontal_gradient(f, p, s)?.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
}

/// How `∂⊥` treats points with small `|z|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicPolicy {
    pub threshold: f64,
    /// Value returned below the threshold instead of an error.
    pub limit: Option<Complex64>,
}

impl Default for CharacteristicPolicy {
    fn default() -> Self {
        Self { threshold: 1e-6, limit: None }
    }
}

/// Some(limit) when `p` is characteristic under the policy.
fn characteristic(p: &HPoint, policy: &CharacteristicPolicy) -> Result<Option<Complex64>> {
    let r = p.abs_z();
    if r < policy.threshold {
        return policy
            .limit
            .map(Some)
            .ok_or(Error::Characteristic { abs_z: r, threshold: policy.threshold });
    }
    Ok(None)
}

/// `∂⊥ f = (1/|z|)(Ā E f + A Ē f)` with `E = Σ z_j Z_j`, `A = |z|² + it`.
pub fn horizontal_normal_derivative(
    f: &ScalarField,
    p: &HPoint,
    s: &StencilParams,
    policy: &CharacteristicPolicy,
) -> Result<Complex64> {
    if let Some(v) = characteristic(p, policy)? {
        return Ok(v);
    }
    let mut e = Complex64::new(0.0, 0.0);
    let mut ebar = Complex64::new(0.0, 0.0);
    for j in 0..p.n() {
        e += p.z[j] * apply_field(VectorField::Z(j), f, p, s)?;
        ebar += p.z[j].conj() * apply_field(VectorField::Zbar(j), f, p, s)?;
    }
    let a = Complex64::new(p.abs_z2(), p.t);
    Ok((a.conj() * e + a * ebar) / p.abs_z())
}

/// Euclidean components of the horizontal field `V` with `V f = ∂⊥ f`.
pub fn horizontal_normal_direction(p: &HPoint) -> Result<Direction> {
    let r = p.abs_z();
    if r == 0.0 {
        return Err(Error::Characteristic { abs_z: 0.0, threshold: 0.0 });
    }
    let abar = Complex64::new(p.abs_z2(), -p.t);
    let mut dz = Vec::with_capacity(p.n());
    let mut dt = 0.0;
    for zj in &p.z {
        let w = abar * zj / r;
        dz.push(w);
        dt += 2.0 * zj.im * w.re - 2.0 * zj.re * w.im;
    }
    Ok(Direction { dz, dt })
}

/// `∂⊥ f` from values at `p - khV`, `k ≥ 1`, so `f` is only sampled strictly
/// inside the ball when `p` is on the sphere.
pub fn horizontal_normal_derivative_inward(
    f: &ScalarField,
    p: &HPoint,
    s: &StencilParams,
    policy: &CharacteristicPolicy,
) -> Result<Complex64> {
    if let Some(v) = characteristic(p, policy)? {
        return Ok(v);
    }
    let d = horizontal_normal_direction(p)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for &(k, w) in s.one_sided_taps() {
        acc += w * f.eval(&d.shift(p, -k * s.h))?;
    }
    Ok(-acc / s.h)
}

/// `K f = N^{-2n} f ∘ h`.
pub fn kelvin_transform(f: &ScalarField, n: usize) -> Result<ScalarField> {
    if f.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: f.n() });
    }
    let f = f.clone();
    Ok(ScalarField::try_new(n, f.is_circular(), move |p| {
        let q = inversion(p)?;
        Ok(p.gauge_norm().powi(-2 * n as i32) * f.eval(&q)?)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(re: f64, im: f64, t: f64) -> HPoint {
        HPoint::h1(Complex64::new(re, im), t)
    }

    #[test]
    fn stencil_validation() {
        assert!(StencilParams::new(0.0, 2).is_err());
        assert!(StencilParams::new(1e-3, 3).is_err());
        assert!(StencilParams::new(1e-3, 4).is_ok());
    }

    #[test]
    fn fields_on_t() {
        let f = ScalarField::real(1, true, |p| p.t);
        let s = StencilParams::default();
        let p = p1(0.3, 1.0, 0.2);
        assert!((apply_field(VectorField::T, &f, &p, &s).unwrap() - 1.0).norm() < 1e-10);
        assert!((apply_field(VectorField::X(0), &f, &p, &s).unwrap() - 2.0).norm() < 1e-10);
        let z = apply_field(VectorField::Z(0), &f, &p, &s).unwrap();
        assert!((z - I * p.z[0].conj()).norm() < 1e-10);
    }

    #[test]
    fn sublaplacian_of_quadratics() {
        let s = StencilParams::new(1e-3, 4).unwrap();
        let p = HPoint::new(vec![Complex64::new(0.2, -0.1), Complex64::new(0.4, 0.3)], 0.7).unwrap();
        let t = ScalarField::real(2, true, |p| p.t);
        let z2 = ScalarField::real(2, true, |p| p.abs_z2());
        assert!(sublaplacian_l0(&t, &p, &s).unwrap().norm() < 1e-8);
        assert!((sublaplacian_l0(&z2, &p, &s).unwrap() - 2.0).norm() < 1e-8);
    }

    #[test]
    fn normal_derivative_on_sphere() {
        let s = StencilParams::new(1e-3, 4).unwrap();
        let pol = CharacteristicPolicy::default();
        let p = crate::group::polar_to_point(crate::group::Polar { r: 1.0, phi: 0.4, alpha: 0.6 }, 1.0).unwrap();
        let r = p.abs_z();
        let z2 = ScalarField::circular(1, |s, _| s);
        let t = ScalarField::circular(1, |_, t| t);
        let one = ScalarField::constant(1, 1.0);
        let d = horizontal_normal_derivative(&z2, &p, &s, &pol).unwrap();
        assert!((d.re - 2.0 * r.powi(3)).abs() < 1e-9 && d.im.abs() < 1e-12);
        let d = horizontal_normal_derivative(&t, &p, &s, &pol).unwrap();
        assert!((d.re - 2.0 * r * p.t).abs() < 1e-9);
        assert!(horizontal_normal_derivative(&one, &p, &s, &pol).unwrap().norm() < 1e-12);
        let d_in = horizontal_normal_derivative_inward(&t, &p, &s, &pol).unwrap();
        assert!((d_in.re - 2.0 * r * p.t).abs() < 1e-8);
    }

    #[test]
    fn characteristic_policy() {
        let s = StencilParams::default();
        let f = ScalarField::constant(1, 1.0);
        let pole = p1(0.0, 0.0, 1.0);
        assert!(matches!(
            horizontal_normal_derivative(&f, &pole, &s, &CharacteristicPolicy::default()),
            Err(Error::Characteristic { .. })
        ));
        let pol = CharacteristicPolicy { threshold: 1e-6, limit: Some(Complex64::new(0.0, 0.0)) };
        assert_eq!(horizontal_normal_derivative(&f, &pole, &s, &pol).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn kelvin_of_one() {
        let k = kelvin_transform(&ScalarField::constant(1, 1.0), 1).unwrap();
        let p = p1(0.3, 0.2, -0.4);
        assert!((k.eval_re(&p).unwrap() - p.gauge_norm().powi(-2)).abs() < 1e-14);
        assert!(k.eval(&HPoint::identity(1)).is_err());
    }
}
