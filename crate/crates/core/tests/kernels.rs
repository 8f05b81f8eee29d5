use heisenberg_neumann::kernels::*;
use heisenberg_neumann::operators::{horizontal_normal_derivative, sublaplacian_l0};
use heisenberg_neumann::series::*;
use heisenberg_neumann::special::circular_average;
use heisenberg_neumann::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn fitted6() -> &'static KernelCoefficients {
    static C: OnceLock<KernelCoefficients> = OnceLock::new();
    C.get_or_init(|| project_coefficients(1, 6, 6, &FitGrid::default()).unwrap())
}

fn p1(re: f64, im: f64, t: f64) -> HPoint {
    HPoint::h1(Complex64::new(re, im), t)
}

fn ball_point(rng: &mut ChaCha8Rng, rmax: f64) -> HPoint {
    loop {
        let p = p1(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r = p.gauge_norm();
        if r < rmax && r > 0.05 {
            return p;
        }
    }
}

#[test]
fn fit_meets_held_out_tolerance() {
    let c = fitted6();
    assert!(c.residual <= 1e-4, "residual {}", c.residual);
    // only the k = 0 column is populated on H_1
    assert!(c.a.iter().all(|row| row[1..].iter().all(|v| v.norm() == 0.0)));
    assert!((c.a[0][0].re - a0_constant(1)).abs() < 1e-6);
}

#[test]
fn fit_is_stable_under_refinement() {
    let c = fitted6();
    let f = project_coefficients(1, 6, 6, &FitGrid::default().refined()).unwrap();
    for m in 0..=6 {
        let (x, y) = (c.a[m][0].re, f.a[m][0].re);
        assert!((x - y).abs() <= 1e-6 * y.abs(), "m={m}: {x} vs {y}");
    }
}

#[test]
fn series_matches_closed_form_on_pairs() {
    let c = fitted6();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let xi = ball_point(&mut rng, 1.0);
        let eta = ball_point(&mut rng, 1.0);
        let eta = eta.dilate(rng.gen_range(0.0..0.5) * xi.gauge_norm() / eta.gauge_norm());
        let s = series_averaged_fundamental(c, &eta, &xi).unwrap();
        let g = averaged_fundamental(&eta, &xi).unwrap();
        assert!((s.value - g).abs() <= c.residual * g * 1.0001 + s.tail, "{} vs {}", s.value, g);
    }
}

#[test]
fn regular_parts_are_harmonic() {
    let c = fitted6();
    let s = StencilParams::new(1e-3, 4).unwrap();
    let eta = p1(0.3, 0.0, 0.1);
    let nk = NeumannKernel::new(c, &eta).unwrap();
    let c1 = c.clone();
    let e1 = eta.clone();
    let kel = ScalarField::try_new(1, true, move |p| Ok(Complex64::new(series_kelvin(&c1, &e1, p)?.value, 0.0)));
    let c2 = c.clone();
    let e2 = eta.clone();
    let cor = ScalarField::try_new(1, true, move |p| Ok(Complex64::new(harmonic_correction(&c2, &e2, p)?.value, 0.0)));
    let nk2 = nk.clone();
    let reg = ScalarField::try_new(1, true, move |p| Ok(Complex64::new(nk2.regular_part(p)?, 0.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let xi = ball_point(&mut rng, 0.95);
        for f in [&kel, &cor, &reg] {
            let l = sublaplacian_l0(f, &xi, &s).unwrap().norm();
            assert!(l < 1e-6, "L0 = {l}");
        }
    }
    // N_B itself is harmonic away from the pole orbit
    let field = nk.field();
    let xi = p1(-0.5, 0.2, -0.4);
    assert!(sublaplacian_l0(&field, &xi, &s).unwrap().norm() < 1e-6);
}

#[test]
fn neumann_kernel_normalised_and_finite_near_pole() {
    let c = fitted6();
    let eta = p1(0.3, 0.0, 0.1);
    let nk = NeumannKernel::new(c, &eta).unwrap();
    let near = p1(0.3 + 1e-6, 0.0, 0.1);
    assert!(nk.regular_part(&near).unwrap().is_finite());
    assert!(nk.value(&eta).is_err());
}

/// On the sphere the series terms cancel in pairs, and what is left of
/// `∂⊥N_B` is `∂⊥ḡ` plus `2 a_{0;0}`-independent Kelvin pieces; the flux
/// `∫ ∂⊥N_B dσ = -1` forces a nonzero remainder.
#[test]
fn normal_derivative_matches_differences_and_carries_unit_flux() {
    let c = project_coefficients(1, 8, 8, &FitGrid::default()).unwrap();
    let eta = p1(0.3, 0.0, 0.1);
    let nk = NeumannKernel::new(&c, &eta).unwrap();
    let field = nk.field();
    let s = StencilParams::new(1e-4, 4).unwrap();
    let pol = CharacteristicPolicy::default();
    for alpha in [-1.2, -0.3, 0.4, 1.0] {
        let xi = p1(f64::cos(alpha).sqrt(), 0.0, f64::sin(alpha));
        let a = nk.normal_derivative(&xi).unwrap();
        let fd = horizontal_normal_derivative(&field, &xi, &s, &pol).unwrap().re;
        assert!((a - fd).abs() < 1e-7, "{a} vs {fd}");
    }
    let rule = heisenberg_neumann::quadrature::circular_surface_rule(None, 12, 1e-8);
    let flux: f64 = rule
        .x
        .iter()
        .zip(&rule.w)
        .map(|(a, w)| w * nk.normal_derivative(&p1(a.cos().sqrt(), 0.0, a.sin())).unwrap())
        .sum();
    assert!((flux + 1.0).abs() < 1e-6, "flux {flux}");
}

#[test]
fn averaged_kernel_is_theta_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 30 {
        let (eta, xi) = (ball_point(&mut rng, 1.0), ball_point(&mut rng, 1.0));
        let e2 = eta.clone();
        let g = ScalarField::try_new(1, false, move |p| Ok(Complex64::new(fundamental_solution(&e2, p)?, 0.0)));
        // well separated from the rotation orbit of the pole
        let orbit = (0..720)
            .map(|k| group::gauge_distance(&eta, &xi.rotate(k as f64 * std::f64::consts::TAU / 720.0)).unwrap())
            .fold(f64::INFINITY, f64::min);
        if orbit < 0.3 {
            continue;
        }
        let avg = circular_average(&g, &xi, 2048).unwrap().re;
        assert!((avg - averaged_fundamental(&eta, &xi).unwrap()).abs() < 1e-10);
        checked += 1;
    }
}

proptest! {
    #[test]
    fn fundamental_solution_is_symmetric(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64,
                                         d in -1.0..1.0f64, e in -1.0..1.0f64, f in -1.0..1.0f64) {
        let (p, q) = (p1(a, b, c), p1(d, e, f));
        prop_assume!(group::gauge_distance(&p, &q).unwrap() > 1e-3);
        let (x, y) = (fundamental_solution(&p, &q).unwrap(), fundamental_solution(&q, &p).unwrap());
        prop_assert!((x - y).abs() <= 1e-13 * x);
        let g0 = fundamental_solution(&HPoint::identity(1), &group_mul(&inverse(&p), &q).unwrap()).unwrap();
        prop_assert!((x - g0).abs() <= 1e-12 * x);
    }

    #[test]
    fn averaged_is_positive(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64,
                            d in -1.0..1.0f64, e in -1.0..1.0f64, f in -1.0..1.0f64) {
        let (p, q) = (p1(a, b, c), p1(d, e, f));
        prop_assume!(((p.abs_z2() - q.abs_z2()).powi(2) + (p.t - q.t).powi(2)) > 1e-12);
        prop_assert!(averaged_fundamental(&p, &q).unwrap() > 0.0);
    }

    #[test]
    fn pole_derivative_is_swapped_point_derivative(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64,
                                                   d in -1.0..1.0f64, e in -1.0..1.0f64, f in -1.0..1.0f64) {
        let (p, q) = (p1(a, b, c), p1(d, e, f));
        prop_assume!(group::gauge_distance(&p, &q).unwrap() > 1e-2 && p.abs_z() > 1e-2 && q.abs_z() > 1e-2);
        let x = fundamental_normal_derivative_pole(&p, &q).unwrap();
        let y = fundamental_normal_derivative(&q, &p).unwrap();
        prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
    }
}

#[test]
fn closed_form_normal_derivative_matches_stencil() {
    let s = StencilParams::new(1e-4, 4).unwrap();
    let pol = CharacteristicPolicy::default();
    let eta = p1(0.2, -0.1, 0.05);
    let e2 = eta.clone();
    let g = ScalarField::try_new(1, false, move |p| Ok(Complex64::new(fundamental_solution(&e2, p)?, 0.0)));
    for xi in [p1(0.8, 0.3, 0.2), p1(-0.4, 0.6, -0.5)] {
        let fd = horizontal_normal_derivative(&g, &xi, &s, &pol).unwrap().re;
        let cf = fundamental_normal_derivative(&eta, &xi).unwrap();
        assert!((fd - cf).abs() < 1e-7 * (1.0 + cf.abs()), "{fd} vs {cf}");
        let e3 = xi.clone();
        let gp = ScalarField::try_new(1, false, move |p| Ok(Complex64::new(fundamental_solution(p, &e3)?, 0.0)));
        let fdp = horizontal_normal_derivative(&gp, &eta, &s, &pol).unwrap().re;
        let cfp = fundamental_normal_derivative_pole(&eta, &xi).unwrap();
        assert!((fdp - cfp).abs() < 1e-6 * (1.0 + cfp.abs()), "{fdp} vs {cfp}");
    }
}
