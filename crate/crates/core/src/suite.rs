//! Identity checks with measured defects, shared by the command-line
//! `verify` command and the acceptance tests.

use crate::error::Result;
use crate::field::ScalarField;
use crate::group::{polar_to_point, HPoint, Polar};
use crate::kernels::{averaged_fundamental, fundamental_normal_derivative, fundamental_solution};
use crate::layer::{build_k, geometric_steps, jump_probe, DensityVector, NystromRule};
use crate::operators::{apply_field, sublaplacian_l0, StencilParams, VectorField};
use crate::quadrature::{ball_quadrature, greens_identity_residual, sphere_area, sphere_quadrature};
use crate::series::{project_coefficients, FitGrid, KernelCoefficients, NeumannKernel};
use crate::solver::{cross_method_deviation, mean_anchored_error, solve_via_bie, solve_via_kernel, NeumannProblem, SolverSettings};
use crate::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::time::Instant;

/// Outcome of one identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub defect: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
}

impl Check {
    fn new(name: &str, defect: f64, threshold: f64, pass: bool, detail: String) -> Self {
        Self { name: name.into(), defect, threshold, pass, detail, seconds: 0.0 }
    }

    fn at_most(name: &str, defect: f64, threshold: f64, detail: String) -> Self {
        Self::new(name, defect, threshold, defect <= threshold, detail)
    }

    fn failed(name: &str, threshold: f64, err: &Error) -> Self {
        Self::new(name, f64::INFINITY, threshold, false, format!("error: {err}"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: defect {:.3e} (threshold {:.1e}){}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.defect,
            self.threshold,
            if self.detail.is_empty() { String::new() } else { format!("; {}", self.detail) }
        )
    }
}

/// Runs `body`, turning an error into a failed check and recording time.
pub fn timed(name: &str, threshold: f64, body: impl FnOnce() -> Result<Check>) -> Check {
    let start = Instant::now();
    let mut c = body().unwrap_or_else(|e| Check::failed(name, threshold, &e));
    c.seconds = start.elapsed().as_secs_f64();
    c
}

fn p1(x: f64, y: f64, t: f64) -> HPoint {
    HPoint::h1(Complex64::new(x, y), t)
}

fn cube_point(rng: &mut ChaCha8Rng) -> HPoint {
    p1(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn ball_point(rng: &mut ChaCha8Rng) -> HPoint {
    loop {
        let p = cube_point(rng);
        if p.gauge_norm() < 1.0 {
            return p;
        }
    }
}

/// Polynomial fields of degree up to six.
pub fn test_polynomials() -> Vec<ScalarField> {
    let xyt = |p: &HPoint| (p.z[0].re, p.z[0].im, p.t);
    vec![
        ScalarField::real(1, false, move |p| {
            let (x, y, t) = xyt(p);
            x * x * y + t
        }),
        ScalarField::real(1, false, move |p| {
            let (x, y, t) = xyt(p);
            t * t * x - y * y * y
        }),
        ScalarField::real(1, false, move |p| {
            let (x, y, t) = xyt(p);
            x.powi(4) * y * y - t.powi(3)
        }),
        ScalarField::real(1, false, move |p| {
            let (x, y, t) = xyt(p);
            (x * x + y * y).powi(3) + x * t * t
        }),
        ScalarField::real(1, false, move |p| {
            let (x, y, t) = xyt(p);
            x.powi(5) - 3.0 * x * y * t * t + y.powi(6)
        }),
    ]
}

/// The test polynomials plus a transcendental field. Order-4 stencils are
/// exact on the polynomials for every step, so only this field exposes a
/// step that is too large.
pub fn test_fields() -> Vec<ScalarField> {
    let mut v = test_polynomials();
    v.push(ScalarField::real(1, false, |p| (p.z[0].re).exp() * (2.0 * p.z[0].im).cos() + p.t.sin() * p.z[0].re));
    v
}

fn nested(outer: VectorField, inner: VectorField, f: &ScalarField, p: &HPoint, s: &StencilParams) -> Result<Complex64> {
    let (f, s2) = (f.clone(), *s);
    let g = ScalarField::try_new(1, false, move |q| apply_field(inner, &f, q, &s2));
    apply_field(outer, &g, p, s)
}

/// `max |([X, Y] + 4T) f|` over `fields` at random points.
pub fn commutator(stencil: &StencilParams, fields: &[ScalarField], points: usize, seed: u64, threshold: f64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<HPoint> = (0..points).map(|_| cube_point(&mut rng)).collect();
    let mut worst = 0.0f64;
    for f in fields {
        for p in &pts {
            let xy = nested(VectorField::X(0), VectorField::Y(0), f, p, stencil)?;
            let yx = nested(VectorField::Y(0), VectorField::X(0), f, p, stencil)?;
            let t = apply_field(VectorField::T, f, p, stencil)?;
            worst = worst.max((xy - yx + 4.0 * t).norm());
        }
    }
    Ok(Check::at_most("commutator [X,Y] = -4T", worst, threshold, format!("h = {:e}, order {}", stencil.h, stencil.order)))
}

/// `max |L_0 g_e(ξ)| N(ξ)² / |g_e(ξ)|` over random `ξ` with `N ∈ [0.3, 2]`.
pub fn harmonicity(points: usize, seed: u64, threshold: f64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stencil = StencilParams::new(1e-3, 4)?;
    let e = HPoint::identity(1);
    let g = {
        let e = e.clone();
        ScalarField::try_new(1, true, move |q| Ok(Complex64::new(fundamental_solution(&e, q)?, 0.0)))
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < points {
        let xi = p1(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-4.0..4.0));
        let r = xi.gauge_norm();
        if !(0.3..=2.0).contains(&r) || xi.abs_z() < 1e-3 {
            continue;
        }
        count += 1;
        let l = sublaplacian_l0(&g, &xi, &stencil)?.norm();
        worst = worst.max(l * r * r / fundamental_solution(&e, &xi)?);
    }
    Ok(Check::at_most("fundamental solution is L0-harmonic", worst, threshold, format!("{points} points")))
}

/// `max |ḡ - (θ-average of g on `nodes` nodes)|` over random pairs in the
/// ball at gauge distance at least `min_distance`; with `orbit_separation`
/// the pairs are also kept that far from each other's `θ`-orbit.
pub fn averaged_kernel(pairs: usize, nodes: usize, min_distance: f64, orbit_separation: Option<f64>, seed: u64, threshold: f64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < pairs {
        let (eta, xi) = (ball_point(&mut rng), ball_point(&mut rng));
        if crate::group::gauge_distance(&eta, &xi)? < min_distance {
            continue;
        }
        let orbit = |k: usize, n: usize| xi.rotate(TAU * k as f64 / n as f64);
        if let Some(sep) = orbit_separation {
            let close = (0..720).map(|k| crate::group::gauge_distance(&eta, &orbit(k, 720))).collect::<Result<Vec<_>>>()?;
            if close.iter().cloned().fold(f64::INFINITY, f64::min) < sep {
                continue;
            }
        }
        count += 1;
        let mut acc = 0.0;
        for k in 0..nodes {
            acc += fundamental_solution(&eta, &orbit(k, nodes))?;
        }
        worst = worst.max((averaged_fundamental(&eta, &xi)? - acc / nodes as f64).abs());
    }
    let detail = match orbit_separation {
        Some(s) => format!("{pairs} pairs, {nodes} nodes, orbit separation >= {s}"),
        None => format!("{pairs} pairs, {nodes} nodes, pair distance >= {min_distance}"),
    };
    Ok(Check::at_most("averaged kernel is the theta-average", worst, threshold, detail))
}

/// `|∫ ∂⊥g_η dσ|` against 1 for interior poles, with the common sign.
pub fn flux(threshold: f64) -> Result<Check> {
    let sq = sphere_quadrature(1, 64, 48)?;
    let poles = [p1(0.0, 0.0, 0.0), p1(0.2, 0.0, 0.05), p1(-0.3, 0.4, 0.2), p1(0.1, -0.2, -0.5), p1(0.5, 0.3, 0.1)];
    let mut worst = 0.0f64;
    let mut signs = Vec::new();
    for eta in &poles {
        let mut acc = Vec::with_capacity(sq.len());
        for (x, w) in sq.nodes.iter().zip(&sq.weights) {
            acc.push(w * fundamental_normal_derivative(eta, x)?);
        }
        let total = crate::quadrature::compensated_sum(acc);
        worst = worst.max((total.abs() - 1.0).abs());
        signs.push(total.signum());
    }
    let constant = signs.iter().all(|s| *s == signs[0]);
    Ok(Check::new(
        "unit flux of the fundamental solution",
        worst,
        threshold,
        worst <= threshold && constant,
        format!("sign {:+} at all poles: {constant}", signs[0]),
    ))
}

fn boundary_points(count: usize) -> Vec<HPoint> {
    // non-characteristic points, avoiding α = 0 where t vanishes
    (0..count)
        .map(|k| {
            let alpha = -1.2 + 2.4 * (k as f64 + 0.3) / count as f64;
            polar_to_point(Polar { r: 1.0, phi: 0.7 * k as f64, alpha }, 1.0).expect("valid polar point")
        })
        .collect()
}

/// Relative defect of `v_+ - v_-` against `factor·φ` for φ ∈ {1, t, |z|²}.
pub fn jumps(factor: f64, points: usize, threshold: f64) -> Result<Check> {
    let sq = sphere_quadrature(1, 12, 12)?;
    let h = geometric_steps(0.05, 5);
    let fields: [(&str, fn(f64, f64) -> f64); 3] = [("1", |_, _| 1.0), ("t", |_, t| t), ("|z|^2", |s, _| s)];
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for (name, f) in fields {
        let phi = DensityVector::from_field(&ScalarField::circular(1, f), &sq)?;
        let mut ratio_sum = 0.0;
        for eta in boundary_points(points) {
            let r = jump_probe(&phi, &sq, &eta, &h)?;
            let value = f(eta.abs_z2(), eta.t);
            let jump = r.double_layer.outer - r.double_layer.inner;
            worst = worst.max((jump - factor * value).abs() / (factor * value).abs());
            ratio_sum += jump / value;
        }
        ratios.push(format!("{name}: {:.6}", ratio_sum / points as f64));
    }
    Ok(Check::at_most(
        &format!("double-layer jump equals {factor}·phi"),
        worst,
        threshold,
        format!("mean (v+ - v-)/phi {}", ratios.join(", ")),
    ))
}

/// Corrected `K` maps constants to `-1` times the constant.
pub fn k_constant(threshold: f64) -> Result<Check> {
    let sq = sphere_quadrature(1, 12, 12)?;
    let k = build_k(&sq, NystromRule::Corrected)?;
    let out = k.apply(&vec![Complex64::new(1.0, 0.0); sq.len()]);
    let worst = out.iter().map(|v| (v + 1.0).norm()).fold(0.0, f64::max);
    Ok(Check::at_most("K maps 1 to -1", worst, threshold, String::new()))
}

/// Smallest and second-smallest singular values of `I + K`.
pub fn spectral_gap(resolutions: &[usize], null_max: f64, gap_min: f64) -> Result<Check> {
    let mut worst_null = 0.0f64;
    let mut worst_gap = f64::INFINITY;
    let mut detail = Vec::new();
    for &res in resolutions {
        let sq = sphere_quadrature(1, res, res)?;
        let sv = build_k(&sq, NystromRule::Corrected)?.identity_plus_singular_values();
        worst_null = worst_null.max(sv[0].0);
        worst_gap = worst_gap.min(sv[1].0);
        detail.push(format!("{res}x{res}: s1 {:.2e}, s2 {:.4}", sv[0].0, sv[1].0));
    }
    Ok(Check::new(
        "one-dimensional null space of I+K",
        worst_null,
        null_max,
        worst_null <= null_max && worst_gap >= gap_min,
        format!("{} (s2 >= {gap_min})", detail.join("; ")),
    ))
}

/// Green's second identity for two polynomial fields.
pub fn green_residual(threshold: f64) -> Result<Check> {
    let sq = sphere_quadrature(1, 24, 24)?;
    let vq = ball_quadrature(1, 12, 12, 16)?;
    let s = StencilParams::new(1e-3, 4)?;
    let polys = test_polynomials();
    let r = greens_identity_residual(&polys[0], &polys[3], &sq, &vq, &s)?;
    Ok(Check::at_most("Green's second identity", r, threshold, String::new()))
}

/// Fit residual and the constant coefficient.
pub fn fit(coeffs: &KernelCoefficients, threshold: f64) -> Result<Check> {
    let a00 = (coeffs.a[0][0].re - crate::kernels::a0_constant(coeffs.n)).abs();
    Ok(Check::new(
        "series fit on held-out pairs",
        coeffs.residual,
        threshold,
        coeffs.residual <= threshold && a00 <= 1e-6,
        format!("M = {}, K = {}, |a00 - a0| = {a00:.2e}", coeffs.m_max, coeffs.k_max),
    ))
}

pub fn fit_default() -> Result<KernelCoefficients> {
    project_coefficients(1, 6, 6, &FitGrid::default())
}

/// `max |∂⊥N_B(η, ·)|` on the sphere for each truncation, required to
/// decrease and to end below `threshold`.
pub fn neumann_boundary(eta: &HPoint, orders: &[usize], threshold: f64) -> Result<Check> {
    let alphas: Vec<f64> = (0..400).map(|k| -FRAC_PI_2 + PI * (k as f64 + 0.5) / 400.0).filter(|a| a.cos() > 1e-6).collect();
    let mut maxima = Vec::new();
    let mut spreads = Vec::new();
    for &m in orders {
        let c = project_coefficients(1, m, m, &FitGrid::default())?;
        let nk = NeumannKernel::new(&c, eta)?;
        let vals = alphas
            .iter()
            .map(|a| nk.normal_derivative(&HPoint::h1(Complex64::new(a.cos().sqrt(), 0.0), a.sin())))
            .collect::<Result<Vec<f64>>>()?;
        maxima.push(vals.iter().map(|v| v.abs()).fold(0.0, f64::max));
        // the flux of N_B is -1 and settles on the weight |z|/π, whose
        // integral over the sphere is one
        spreads.push(alphas.iter().zip(&vals).map(|(a, v)| (v + a.cos().sqrt() / PI).abs()).fold(0.0, f64::max));
    }
    let monotone = maxima.windows(2).all(|w| w[1] < w[0]);
    let last = *maxima.last().unwrap_or(&f64::INFINITY);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    Ok(Check::new(
        "normal derivative of N_B vanishes on the sphere",
        last,
        threshold,
        monotone && last <= threshold,
        format!(
            "max |d N_B| for M=K in {orders:?}: [{}], decreasing: {monotone}; max |d N_B + |z|/pi| : [{}]",
            fmt(&maxima),
            fmt(&spreads)
        ),
    ))
}

/// Manufactured problems `u = t` and `u = |z|²` by both routes.
pub fn manufactured(coeffs: &KernelCoefficients, settings: &SolverSettings, rel_tol: f64, dev_tol: f64) -> Result<Check> {
    let problems: [(&str, NeumannProblem, fn(&HPoint) -> f64); 2] = [
        (
            "u = t",
            NeumannProblem::new(ScalarField::constant(1, 0.0), ScalarField::circular(1, |s, t| 2.0 * s.sqrt() * t), 1e-6)?,
            |p| p.t,
        ),
        (
            "u = |z|^2",
            NeumannProblem::new(ScalarField::constant(1, 1.0), ScalarField::circular(1, |s, _| 2.0 * s * s.sqrt()), 1e-6)?,
            |p| p.abs_z2(),
        ),
    ];
    let mut worst_err = 0.0f64;
    let mut worst_dev = 0.0f64;
    let mut detail = Vec::new();
    for (name, prob, exact) in &problems {
        let k = solve_via_kernel(prob, coeffs, settings)?;
        let b = solve_via_bie(prob, settings)?;
        let (ek, eb) = (mean_anchored_error(&k, exact), mean_anchored_error(&b, exact));
        let dev = cross_method_deviation(&k, &b)?;
        worst_err = worst_err.max(ek).max(eb);
        worst_dev = worst_dev.max(dev);
        detail.push(format!("{name}: kernel {ek:.2e}, bie {eb:.2e}, deviation {dev:.2e}"));
    }
    Ok(Check::new(
        "manufactured solutions",
        worst_err,
        rel_tol,
        worst_err <= rel_tol && worst_dev <= dev_tol,
        format!("{} (deviation <= {dev_tol})", detail.join("; ")),
    ))
}

/// `(f, g) = (0, 1)` must be refused with gap `|∂B|`.
pub fn compatibility_gate(threshold: f64) -> Result<Check> {
    let prob = NeumannProblem::new(ScalarField::constant(1, 0.0), ScalarField::constant(1, 1.0), 1e-6)?;
    match solve_via_bie(&prob, &SolverSettings::default()) {
        Err(Error::Incompatible { gap, .. }) => {
            let d = (gap - sphere_area()).abs();
            Ok(Check::at_most("incompatible data refused", d, threshold, format!("gap {gap:.6}, |dB| {:.6}", sphere_area())))
        }
        Err(e) => Err(e),
        Ok(_) => Ok(Check::new("incompatible data refused", f64::INFINITY, threshold, false, "accepted".into())),
    }
}

/// The identities run by `verify`.
pub fn identity_suite(stencil: &StencilParams, seed: u64) -> Vec<Check> {
    vec![
        timed("commutator", 1e-6, || commutator(stencil, &test_fields(), 50, seed, 1e-6)),
        timed("averaged kernel", 1e-10, || averaged_kernel(20, 2048, 0.1, Some(0.3), seed, 1e-10)),
        timed("jump", 1e-4, || jumps(1.0, 4, 1e-4)),
        timed("K constant", 1e-10, || k_constant(1e-10)),
        timed("Green", 1e-6, || green_residual(1e-6)),
    ]
}
