//! Gauss–Legendre building blocks, the sphere and ball rules of the polar
//! chart, the Green-identity meter and the solvability functional.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::{polar_to_point, HPoint, Polar};
use crate::operators::{
    horizontal_gradient_norm, horizontal_normal_derivative, sublaplacian_l0, CharacteristicPolicy,
    StencilParams,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut r = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, r);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * r * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = r;
                p0 = 1.0;
            }
            dp = n as f64 * (r * p1 - p0) / (r * r - 1.0);
            let dx = p1 / dp;
            r -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -r;
        x[n - 1 - i] = r;
        let wi = 2.0 / ((1.0 - r * r) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// A one-dimensional rule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rule1D {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rule1D {
    pub fn gauss(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        Self { x: x.iter().map(|u| c + h * u).collect(), w: w.iter().map(|v| h * v).collect() }
    }

    /// Gauss rule of order `q` on every panel `[e_k, e_{k+1}]`.
    pub fn composite(edges: &[f64], q: usize) -> Self {
        let (gx, gw) = gauss_legendre(q);
        let mut r = Self::default();
        for e in edges.windows(2) {
            let (c, h) = ((e[0] + e[1]) / 2.0, (e[1] - e[0]) / 2.0);
            if h <= 0.0 {
                continue;
            }
            r.x.extend(gx.iter().map(|u| c + h * u));
            r.w.extend(gw.iter().map(|v| h * v));
        }
        r
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Panel edges on `[a, b]` that halve in width toward `a` (or `b`), the
/// smallest panel having width `min_width`.
pub fn graded_edges(a: f64, b: f64, toward_a: bool, min_width: f64) -> Vec<f64> {
    let len = b - a;
    let mut off = vec![0.0];
    let mut s = min_width;
    while s < len / 2.0 {
        off.push(s);
        s *= 2.0;
    }
    off.push(len);
    if toward_a {
        off.iter().map(|o| a + o).collect()
    } else {
        off.iter().rev().map(|o| b - o).collect()
    }
}

/// Edges on `[a, b]` graded toward every breakpoint in `points` (and toward
/// the ends when `grade_ends` is set), innermost width `min_width`.
pub fn graded_edges_multi(a: f64, b: f64, points: &[f64], min_width: f64, end_width: Option<f64>) -> Vec<f64> {
    let mut cuts: Vec<f64> = points.iter().copied().filter(|p| *p > a && *p < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut stops = vec![(a, end_width)];
    stops.extend(cuts.iter().map(|c| (*c, Some(min_width))));
    stops.push((b, end_width));
    let mut edges = vec![a];
    for w in stops.windows(2) {
        let ((l, wl), (r, wr)) = (w[0], w[1]);
        if r - l <= 0.0 {
            continue;
        }
        let mid = 0.5 * (l + r);
        let left = match wl {
            Some(m) => graded_edges(l, mid, true, m.min((mid - l) / 2.0)),
            None => vec![l, mid],
        };
        let right = match wr {
            Some(m) => graded_edges(mid, r, false, m.min((r - mid) / 2.0)),
            None => vec![mid, r],
        };
        edges.extend(left.into_iter().skip(1));
        edges.extend(right.into_iter().skip(1));
    }
    edges
}

/// Neumaier-compensated sum; order of summation is the iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn compensated_sum_c<I: IntoIterator<Item = Complex64>>(it: I) -> Complex64 {
    let v: Vec<Complex64> = it.into_iter().collect();
    Complex64::new(compensated_sum(v.iter().map(|c| c.re)), compensated_sum(v.iter().map(|c| c.im)))
}

/// Density of `dσ` in the chart `(α, φ)` of the unit sphere: `cos^{1/2}α / 4`.
pub fn surface_density(alpha: f64) -> f64 {
    0.25 * alpha.cos().max(0.0).sqrt()
}

/// Closed-form area `|∂B| = (π/2) √π Γ(3/4)/Γ(5/4)` of the sphere under `dσ`.
pub fn sphere_area() -> f64 {
    use statrs::function::gamma::gamma;
    FRAC_PI_2 * PI.sqrt() * gamma(0.75) / gamma(1.25)
}

/// Tensor rule on the unit Korányi sphere of `H_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuadrature {
    pub n_phi: usize,
    pub n_alpha: usize,
    /// Polar-chart scale.
    pub scale: f64,
    pub alphas: Vec<f64>,
    pub alpha_weights: Vec<f64>,
    /// Node angles `θ = φ + tan α log(1/a)`, indexed `[i * n_phi + p]`.
    pub thetas: Vec<f64>,
    pub nodes: Vec<HPoint>,
    pub weights: Vec<f64>,
    pub char_excluded: bool,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, i_alpha: usize, p_phi: usize) -> usize {
        i_alpha * self.n_phi + p_phi
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// `∫ f dσ` of a complex field.
    pub fn integrate(&self, f: &ScalarField) -> Result<Complex64> {
        let vals = self.nodes.iter().map(|p| f.eval(p)).collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum_c(vals.iter().zip(&self.weights).map(|(v, w)| v * *w)))
    }

    /// `∫ v dσ` of nodal values.
    pub fn integrate_values(&self, v: &[Complex64]) -> Complex64 {
        compensated_sum_c(v.iter().zip(&self.weights).map(|(v, w)| v * *w))
    }

    pub fn to_json(&self) -> QuadratureJson {
        QuadratureJson {
            nodes: self.nodes.iter().map(|p| [p.z[0].re, p.z[0].im, p.t]).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Serialized form `{nodes: [[re z, im z, t], …], weights: […]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureJson {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Chart scale `a = 1`.
pub fn sphere_quadrature(n: usize, n_phi: usize, n_alpha: usize) -> Result<SurfaceQuadrature> {
    sphere_quadrature_scaled(n, n_phi, n_alpha, 1.0)
}

/// Gauss–Legendre in `α`, trapezoid in `φ`. The weight at each node is the
/// Euclidean area element of the chart times `‖∇_0N‖/(4‖∇N‖)`, both
/// evaluated numerically. The poles `α = ±π/2` are never nodes.
pub fn sphere_quadrature_scaled(n: usize, n_phi: usize, n_alpha: usize, scale: f64) -> Result<SurfaceQuadrature> {
    if n != 1 {
        return Err(Error::Unsupported(format!("surface quadrature for n = {n}")));
    }
    if n_phi < 8 || n_alpha < 8 {
        return Err(Error::ResolutionTooLow(format!("(n_phi, n_alpha) = ({n_phi}, {n_alpha}), need ≥ 8")));
    }
    let rule = Rule1D::gauss(n_alpha, -FRAC_PI_2, FRAC_PI_2);
    let dphi = TAU / n_phi as f64;
    let gauge = ScalarField::real(1, true, |p| p.gauge_norm());
    let stencil = StencilParams::new(1e-5, 4)?;
    let mut nodes = Vec::with_capacity(n_phi * n_alpha);
    let mut weights = Vec::with_capacity(n_phi * n_alpha);
    let mut thetas = Vec::with_capacity(n_phi * n_alpha);
    for (&alpha, &wa) in rule.x.iter().zip(&rule.w) {
        for p in 0..n_phi {
            let c = Polar { r: 1.0, phi: p as f64 * dphi, alpha };
            let node = polar_to_point(c, scale)?;
            let jac = chart_area_element(c, scale)?;
            let hn = horizontal_gradient_norm(&gauge, &node, &stencil)?;
            let en = euclidean_gradient_norm(&node);
            thetas.push(node.z[0].arg());
            weights.push(wa * dphi * jac * hn / (4.0 * en));
            nodes.push(node);
        }
    }
    Ok(SurfaceQuadrature {
        n_phi,
        n_alpha,
        scale,
        alphas: rule.x,
        alpha_weights: rule.w,
        thetas,
        nodes,
        weights,
        char_excluded: true,
    })
}

fn embed(p: &HPoint) -> [f64; 3] {
    [p.z[0].re, p.z[0].im, p.t]
}

/// `|∂_α X × ∂_φ X|` for the chart restricted to `r = 1`, by central differences.
fn chart_area_element(c: Polar, scale: f64) -> Result<f64> {
    let h = 1e-6 * (FRAC_PI_2 - c.alpha.abs()).min(1.0);
    let d = |da: f64, dp: f64| -> Result<[f64; 3]> {
        let plus = embed(&polar_to_point(Polar { r: 1.0, phi: c.phi + dp, alpha: c.alpha + da }, scale)?);
        let minus = embed(&polar_to_point(Polar { r: 1.0, phi: c.phi - dp, alpha: c.alpha - da }, scale)?);
        let step = 2.0 * (da + dp);
        Ok([0, 1, 2].map(|k| (plus[k] - minus[k]) / step))
    };
    let (u, v) = (d(h, 0.0)?, d(0.0, 1e-6)?);
    let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    Ok(cross.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Euclidean `‖∇N‖` from `∇N = (|z|² x, |z|² y, t/2) / N³`.
fn euclidean_gradient_norm(p: &HPoint) -> f64 {
    let s = p.abs_z2();
    let n3 = p.gauge_norm().powi(3);
    (s * s * s + p.t * p.t / 4.0).sqrt() / n3
}

/// Product rule in `(r, φ, α)` on the unit ball; `dv = r³ dr dα dφ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeQuadrature {
    pub nodes: Vec<HPoint>,
    pub weights: Vec<f64>,
}

impl VolumeQuadrature {
    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: &ScalarField) -> Result<Complex64> {
        let vals = self.nodes.iter().map(|p| f.eval(p)).collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum_c(vals.iter().zip(&self.weights).map(|(v, w)| v * *w)))
    }
}

/// `n_phi = 1` is accepted and is exact for circular integrands.
pub fn ball_quadrature(n: usize, n_r: usize, n_phi: usize, n_alpha: usize) -> Result<VolumeQuadrature> {
    if n != 1 {
        return Err(Error::Unsupported(format!("ball quadrature for n = {n}")));
    }
    if n_r < 2 || n_alpha < 4 || n_phi < 1 {
        return Err(Error::ResolutionTooLow(format!("(n_r, n_phi, n_alpha) = ({n_r}, {n_phi}, {n_alpha})")));
    }
    let rr = Rule1D::gauss(n_r, 0.0, 1.0);
    let ra = Rule1D::gauss(n_alpha, -FRAC_PI_2, FRAC_PI_2);
    let dphi = TAU / n_phi as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (&r, &wr) in rr.x.iter().zip(&rr.w) {
        for (&alpha, &wa) in ra.x.iter().zip(&ra.w) {
            for p in 0..n_phi {
                nodes.push(polar_to_point(Polar { r, phi: p as f64 * dphi, alpha }, 1.0)?);
                weights.push(wr * wa * dphi * r * r * r);
            }
        }
    }
    Ok(VolumeQuadrature { nodes, weights })
}

/// Graded `(s, t, weight)` rule for `∫_B F dv` with `F` circular, the weight
/// including the `2π` of the angular integral. The panels are graded toward
/// `r = r0` and `α = alpha0`, where `F` may have a ring singularity.
pub fn circular_volume_rule(r0: Option<f64>, alpha0: Option<f64>, order: usize, min_width: f64) -> Vec<(f64, f64, f64)> {
    let rp: Vec<f64> = r0.into_iter().collect();
    let ap: Vec<f64> = alpha0.into_iter().collect();
    let mut re = graded_edges_multi(0.0, 1.0, &rp, min_width, None);
    if r0.is_some_and(|r| r >= 1.0) {
        re = graded_edges(0.0, 1.0, false, min_width);
    }
    let rr = Rule1D::composite(&re, order);
    let ra = Rule1D::composite(&graded_edges_multi(-FRAC_PI_2, FRAC_PI_2, &ap, min_width, None), order);
    let mut out = Vec::with_capacity(rr.x.len() * ra.x.len());
    for (&r, &wr) in rr.x.iter().zip(&rr.w) {
        for (&alpha, &wa) in ra.x.iter().zip(&ra.w) {
            let s = r * r * alpha.cos();
            out.push((s, r * r * alpha.sin(), TAU * wr * wa * r * r * r));
        }
    }
    out
}

/// Graded `(α, weight)` rule on the sphere for circular integrands, the
/// weight including `2π` and the density of `dσ`.
pub fn circular_surface_rule(alpha0: Option<f64>, order: usize, min_width: f64) -> Rule1D {
    let ap: Vec<f64> = alpha0.into_iter().collect();
    let mut r = Rule1D::composite(&graded_edges_multi(-FRAC_PI_2, FRAC_PI_2, &ap, min_width, Some(1e-9)), order);
    for (w, a) in r.w.iter_mut().zip(&r.x) {
        *w *= TAU * surface_density(*a);
    }
    r
}

/// `|∫_B (u L_0 v - v L_0 u) dv - ∫_∂B (u ∂⊥v - v ∂⊥u) dσ|`.
pub fn greens_identity_residual(
    u: &ScalarField,
    v: &ScalarField,
    sq: &SurfaceQuadrature,
    vq: &VolumeQuadrature,
    s: &StencilParams,
) -> Result<f64> {
    let pol = CharacteristicPolicy::default();
    let mut lhs = Vec::with_capacity(vq.nodes.len());
    for (p, w) in vq.nodes.iter().zip(&vq.weights) {
        let (uu, vv) = (u.eval(p)?, v.eval(p)?);
        let val = uu * sublaplacian_l0(v, p, s)? - vv * sublaplacian_l0(u, p, s)?;
        lhs.push(val * *w);
    }
    let mut rhs = Vec::with_capacity(sq.nodes.len());
    for (p, w) in sq.nodes.iter().zip(&sq.weights) {
        let (uu, vv) = (u.eval(p)?, v.eval(p)?);
        let val = uu * horizontal_normal_derivative(v, p, s, &pol)?
            - vv * horizontal_normal_derivative(u, p, s, &pol)?;
        rhs.push(val * *w);
    }
    Ok((compensated_sum_c(lhs) - compensated_sum_c(rhs)).norm())
}

/// Outcome of the compatibility test `∫_B f dv = ∫_∂B g dσ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solvability {
    pub volume_integral: f64,
    pub surface_integral: f64,
    pub gap: f64,
    pub pass: bool,
}

pub fn solvability_check(
    f: &ScalarField,
    g: &ScalarField,
    sq: &SurfaceQuadrature,
    vq: &VolumeQuadrature,
    tol: f64,
) -> Result<Solvability> {
    let vi = vq.integrate(f)?.re;
    let si = sq.integrate(g)?.re;
    let gap = (vi - si).abs();
    Ok(Solvability { volume_integral: vi, surface_integral: si, gap, pass: gap <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1, 2, 5, 10, 16] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn graded_edges_cover_interval() {
        let e = graded_edges(0.0, 1.0, true, 1e-3);
        assert_eq!(e[0], 0.0);
        assert_eq!(*e.last().unwrap(), 1.0);
        assert!((e[1] - 1e-3).abs() < 1e-18);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        let m = graded_edges_multi(-1.0, 1.0, &[0.3], 1e-6, Some(1e-4));
        assert!(m.windows(2).all(|w| w[1] > w[0]));
        assert!(m.iter().any(|x| (*x - 0.3).abs() < 1e-15));
        assert!((m[1] + 1.0 - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(compensated_sum(v), 2e-16);
    }

    #[test]
    fn surface_weights_match_closed_form() {
        let sq = sphere_quadrature(1, 8, 10).unwrap();
        for i in 0..sq.n_alpha {
            for p in 0..sq.n_phi {
                let k = sq.index(i, p);
                let exact = sq.alpha_weights[i] * TAU / 8.0 * surface_density(sq.alphas[i]);
                assert!((sq.weights[k] - exact).abs() < 1e-7 * exact, "{} vs {}", sq.weights[k], exact);
                assert!((sq.nodes[k].gauge_norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_low_resolution() {
        assert!(sphere_quadrature(1, 4, 16).is_err());
        assert!(sphere_quadrature(2, 16, 16).is_err());
        assert!(ball_quadrature(1, 1, 1, 8).is_err());
    }

    #[test]
    fn ball_volume() {
        let vq = ball_quadrature(1, 4, 1, 8).unwrap();
        assert!((vq.total_weight() - PI * PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn circular_rules_integrate_constants() {
        let v: f64 = circular_volume_rule(Some(0.4), Some(0.2), 8, 1e-8).iter().map(|x| x.2).sum();
        assert!((v - PI * PI / 2.0).abs() < 1e-12);
        let s = circular_surface_rule(Some(0.7), 10, 1e-8).w.iter().sum::<f64>();
        assert!((s - sphere_area()).abs() < 1e-12);
    }
}
