use heisenberg_neumann::kernels::fundamental_solution;
use heisenberg_neumann::operators::*;
use heisenberg_neumann::quadrature::*;
use heisenberg_neumann::special::*;
use heisenberg_neumann::*;
use proptest::prelude::*;
use statrs::function::beta::beta;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

fn point(n: usize) -> impl Strategy<Value = HPoint> {
    (prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), n), -1.5..1.5f64)
        .prop_map(|(z, t)| HPoint::new(z.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(), t).unwrap())
}

fn close(a: &HPoint, b: &HPoint, tol: f64) -> bool {
    a.z.iter().zip(&b.z).all(|(x, y)| (x - y).norm() <= tol) && (a.t - b.t).abs() <= tol
}

/// Polynomial of degree six in all real coordinates of `H_2`.
fn poly2() -> ScalarField {
    ScalarField::real(2, false, |p| {
        let (x1, y1, x2, y2, t) = (p.z[0].re, p.z[0].im, p.z[1].re, p.z[1].im, p.t);
        x1 * x1 * y2 - t * t * x2 + y1.powi(3) * t + x1 * y1 * x2 * y2 * t + x2.powi(4) * y1 * y1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_axioms(p in point(2), q in point(2), r in point(2)) {
        let lhs = group_mul(&group_mul(&p, &q).unwrap(), &r).unwrap();
        let rhs = group_mul(&p, &group_mul(&q, &r).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
        let e = HPoint::identity(2);
        prop_assert!(close(&group_mul(&p, &e).unwrap(), &p, 0.0));
        prop_assert!(close(&group_mul(&e, &p).unwrap(), &p, 0.0));
        prop_assert!(close(&group_mul(&p, &inverse(&p)).unwrap(), &e, 1e-15));
    }

    #[test]
    fn gauge_norm_is_homogeneous(p in point(3), lambda in 0.01..10.0f64) {
        let a = gauge_norm(&p.dilate(lambda));
        prop_assert!((a - lambda * gauge_norm(&p)).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn fields_are_left_invariant(p in point(2), q in point(2), j in 0usize..2) {
        let s = StencilParams::new(1e-3, 4).unwrap();
        let f = poly2();
        let shifted = {
            let (f, q) = (f.clone(), q.clone());
            ScalarField::try_new(2, false, move |x| f.eval(&group_mul(&q, x)?))
        };
        let qp = group_mul(&q, &p).unwrap();
        for v in [VectorField::X(j), VectorField::Y(j), VectorField::T] {
            let a = apply_field(v, &shifted, &p, &s).unwrap();
            let b = apply_field(v, &f, &qp, &s).unwrap();
            prop_assert!((a - b).norm() <= 1e-6 * (1.0 + b.norm()), "{:?}: {} vs {}", v, a, b);
        }
    }

    #[test]
    fn commutator_on_h2(p in point(2), j in 0usize..2) {
        let s = StencilParams::new(1e-3, 4).unwrap();
        let f = poly2();
        let nested = |outer: VectorField, inner: VectorField| {
            let f = f.clone();
            let g = ScalarField::try_new(2, false, move |x| apply_field(inner, &f, x, &s));
            apply_field(outer, &g, &p, &s).unwrap()
        };
        let c = nested(VectorField::X(j), VectorField::Y(j)) - nested(VectorField::Y(j), VectorField::X(j));
        let t = apply_field(VectorField::T, &f, &p, &s).unwrap();
        prop_assert!((c + 4.0 * t).norm() <= 1e-6 * (1.0 + t.norm()));
    }

    #[test]
    fn fundamental_solution_harmonic_on_h2(p in point(2)) {
        let r = p.gauge_norm();
        prop_assume!((0.3..=2.0).contains(&r));
        let e = HPoint::identity(2);
        let g = ScalarField::try_new(2, true, move |x| Ok(Complex64::new(fundamental_solution(&e, x)?, 0.0)));
        let l = sublaplacian_l0(&g, &p, &StencilParams::new(1e-3, 4).unwrap()).unwrap();
        let gv = g.eval_re(&p).unwrap();
        prop_assert!(l.norm() <= 1e-4 * gv / (r * r));
    }

    #[test]
    fn gradient_of_gauge_norm(p in point(2)) {
        prop_assume!(p.abs_z() > 0.05 && p.gauge_norm() > 0.2);
        let n = ScalarField::real(2, true, |x| x.gauge_norm());
        let g = horizontal_gradient_norm(&n, &p, &StencilParams::new(1e-4, 4).unwrap()).unwrap();
        prop_assert!((g - p.abs_z() / p.gauge_norm()).abs() < 1e-7);
    }

    #[test]
    fn generating_function(a in 0.5..3.0f64, b in 0.5..3.0f64, r in 0.0..0.8f64, th in 0.0..TAU, phi in 0.0..TAU) {
        let (zeta, z) = (Complex64::from_polar(1.0, th), Complex64::from_polar(r, phi));
        let m_max = 60;
        let idx = |m| CabIndex { m, alpha: Complex64::new(a, 0.0), beta: Complex64::new(b, 0.0) };
        let sum: Complex64 = (0..=m_max).map(|m| z.powu(m as u32) * cab_poly(idx(m), zeta)).sum();
        let one = Complex64::new(1.0, 0.0);
        let exact = (one - z * zeta.conj()).powf(-a) * (one - z * zeta).powf(-b);
        let bound = (m_max as f64 + 2.0).powf(a + b) * r.powi(m_max as i32 + 1) / (1.0 - r);
        prop_assert!((sum - exact).norm() <= bound + 1e-12 * exact.norm());
    }

    #[test]
    fn cab_swap_symmetry(m in 0usize..12, a in 0.5..3.0f64, b in 0.5..3.0f64, re in -1.0..1.0f64, im in -1.0..1.0f64) {
        let zeta = Complex64::new(re, im);
        let (ca, cb) = (Complex64::new(a, 0.0), Complex64::new(b, 0.0));
        let lhs = cab_poly(CabIndex { m, alpha: ca, beta: cb }, zeta);
        let rhs = cab_poly(CabIndex { m, alpha: cb, beta: ca }, zeta.conj());
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn circular_average_is_a_projection(p in point(1)) {
        let f = ScalarField::new(1, false, |x| x.z[0] * x.z[0].conj() * x.t + x.z[0].powu(2) - x.z[0].conj());
        let once = {
            let f = f.clone();
            ScalarField::try_new(1, true, move |x| circular_average(&f, x, 16))
        };
        let a = once.eval(&p).unwrap();
        let b = circular_average(&once, &p, 16).unwrap();
        prop_assert!((a - b).norm() < 1e-13 * (1.0 + a.norm()));
        prop_assert!((a - p.abs_z2() * p.t).norm() < 1e-12 * (1.0 + a.norm()));
    }
}

#[test]
fn cq_recurrences_hold() {
    for n in 2..6 {
        for k in 0..7 {
            for l in 0..7 {
                for circular in [false, true] {
                    let idx = HarmonicIndex { k, l, n };
                    let c = cq_coeffs(idx, circular);
                    let l = if circular { k } else { l };
                    for q in 0..c.len() - 1 {
                        let r = ((k - q) * (l - q)) as f64 * c[q] + ((q + 1) * (n + q - 1)) as f64 * c[q + 1];
                        assert!(r.abs() <= 1e-12 * c[q].abs().max(1.0));
                    }
                }
            }
        }
    }
    assert_eq!(cq_coeffs(HarmonicIndex { k: 1, l: 1, n: 2 }, false), vec![1.0, -1.0]);
    assert_eq!(cq_coeffs(HarmonicIndex { k: 2, l: 2, n: 2 }, true)[1], -4.0);
}

#[test]
fn harmonic_polynomial_is_harmonic() {
    let idx = HarmonicIndex { k: 1, l: 1, n: 2 };
    let y = |v: [f64; 4]| {
        let z = [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])];
        spherical_harmonic(idx, &z, false).unwrap().re
    };
    let h = 1e-3;
    for base in [[0.3, -0.2, 0.5, 0.1], [-0.7, 0.4, 0.2, -0.9]] {
        let mut lap = 0.0;
        for d in 0..4 {
            let (mut up, mut dn) = (base, base);
            up[d] += h;
            dn[d] -= h;
            lap += (y(up) - 2.0 * y(base) + y(dn)) / (h * h);
        }
        // Σ ∂²/∂z_j∂z̄_j is a quarter of the Euclidean Laplacian
        assert!((lap / 4.0).abs() < 1e-6, "{lap}");
    }
    let z = [Complex64::new(0.4, 0.3), Complex64::new(-0.2, 0.6)];
    let ring = (0..32)
        .map(|k| {
            let w = Complex64::from_polar(1.0, TAU * k as f64 / 32.0);
            spherical_harmonic(HarmonicIndex { k: 2, l: 2, n: 2 }, &[z[0] * w, z[1] * w], false).unwrap()
        })
        .sum::<Complex64>()
        / 32.0;
    let circ = spherical_harmonic(HarmonicIndex { k: 2, l: 2, n: 2 }, &z, true).unwrap();
    assert!((ring - circ).norm() < 1e-13);
}

#[test]
fn hyp2f1_matches_long_partial_sums() {
    for n in 1..=3 {
        let a = n as f64 / 2.0;
        for x in [0.1, 0.5, 0.9] {
            let v = hyp2f1(Complex64::new(a, 0.0), Complex64::new(a, 0.0), Complex64::new(n as f64, 0.0), x).unwrap();
            let (mut term, mut sum, mut last) = (1.0f64, 1.0f64, 1.0f64);
            for s in 0..4 * v.terms.max(200) {
                let sf = s as f64;
                term *= (a + sf) * (a + sf) / ((n as f64 + sf) * (sf + 1.0)) * x;
                sum += term;
                assert!(sum >= last);
                last = sum;
            }
            assert!((v.value.re - sum).abs() <= 1e-12 * sum, "n {n} x {x}: {} vs {sum}", v.value.re);
        }
    }
    let v = hyp2f1(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0), 0.5).unwrap();
    assert!((v.value.re - 2.0 * 2f64.ln()).abs() < 1e-12);
}

/// `∫_∂B s^p t^q dσ` and `∫_B s^p t^q dv` with `s = |z|²`.
fn sphere_moment(p: i32, q: i32) -> f64 {
    if q % 2 == 1 {
        return 0.0;
    }
    FRAC_PI_2 * beta((p as f64 + 1.5) / 2.0, (q as f64 + 1.0) / 2.0)
}

fn ball_moment(p: i32, q: i32) -> f64 {
    if q % 2 == 1 {
        return 0.0;
    }
    TAU / (4.0 + 2.0 * (p + q) as f64) * beta((p as f64 + 1.0) / 2.0, (q as f64 + 1.0) / 2.0)
}

const MOMENTS: [(i32, i32); 6] = [(0, 0), (0, 1), (1, 0), (2, 0), (0, 2), (1, 1)];

fn monomial(p: i32, q: i32) -> ScalarField {
    ScalarField::circular(1, move |s, t| s.powi(p) * t.powi(q))
}

#[test]
fn rules_have_positive_weights_and_exact_nodes() {
    let sq = sphere_quadrature(1, 12, 10).unwrap();
    assert!(sq.weights.iter().all(|w| *w > 0.0));
    assert!(sq.nodes.iter().all(|p| (p.gauge_norm() - 1.0).abs() < 1e-12));
    let vq = ball_quadrature(1, 6, 8, 8).unwrap();
    assert!(vq.weights.iter().all(|w| *w > 0.0));
    assert!(vq.nodes.iter().all(|p| p.gauge_norm() < 1.0));
    assert!((sq.total_weight() - sphere_area()).abs() < 1e-2);
}

#[test]
fn surface_rule_converges_on_smooth_moments() {
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let sq = sphere_quadrature(1, n, n).unwrap();
            MOMENTS
                .iter()
                .map(|&(p, q)| (sq.integrate(&monomial(p, q)).unwrap().re - sphere_moment(p, q)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[1] <= errs[0] && errs[2] <= errs[1].max(1e-13), "{errs:?}");
    assert!(errs[2] < 1e-4, "{errs:?}");
}

#[test]
fn ball_rule_converges_spectrally_on_smooth_moments() {
    for (n, tol) in [(6, 1e-5), (12, 1e-12)] {
        let vq = ball_quadrature(1, n, 1, n).unwrap();
        for (p, q) in MOMENTS {
            let v = vq.integrate(&monomial(p, q)).unwrap().re;
            assert!((v - ball_moment(p, q)).abs() < tol, "({p},{q}) {v} {}", ball_moment(p, q));
        }
    }
    assert!((ball_moment(0, 0) - PI * PI / 2.0).abs() < 1e-14);
}

#[test]
fn green_residual_halves_under_refinement() {
    let s = StencilParams::new(1e-3, 4).unwrap();
    let u = ScalarField::real(1, false, |p| p.z[0].re * p.t + p.z[0].im * p.z[0].im);
    let v = ScalarField::real(1, false, |p| p.abs_z2() * p.abs_z2() - p.t * p.z[0].re);
    let coarse = greens_identity_residual(&u, &v, &sphere_quadrature(1, 8, 8).unwrap(), &ball_quadrature(1, 4, 8, 6).unwrap(), &s).unwrap();
    let fine = greens_identity_residual(&u, &v, &sphere_quadrature(1, 16, 16).unwrap(), &ball_quadrature(1, 8, 16, 12).unwrap(), &s).unwrap();
    assert!(fine <= coarse / 2.0 || fine < 1e-8, "{coarse} {fine}");
}

#[test]
fn flux_of_fundamental_solution_and_odd_integrands() {
    let sq = sphere_quadrature(1, 48, 48).unwrap();
    let eta = HPoint::h1(Complex64::new(0.2, 0.0), 0.05);
    let flux: f64 = sq
        .nodes
        .iter()
        .zip(&sq.weights)
        .map(|(x, w)| w * heisenberg_neumann::kernels::fundamental_normal_derivative(&eta, x).unwrap())
        .sum();
    assert!((flux + 1.0).abs() < 1e-6, "{flux}");
    let odd = ScalarField::real(1, false, |p| p.t * p.z[0].re + p.z[0].im);
    assert!(sq.integrate(&odd).unwrap().norm() < 1e-9, "{}", sq.integrate(&odd).unwrap());
    let vq = ball_quadrature(1, 6, 8, 8).unwrap();
    assert!(vq.integrate(&odd).unwrap().norm() < 1e-12);
}

#[test]
fn solvability_of_consistent_and_inconsistent_data() {
    let sq = sphere_quadrature(1, 24, 24).unwrap();
    let vq = ball_quadrature(1, 8, 1, 8).unwrap();
    let f = ScalarField::constant(1, 1.0);
    let g = ScalarField::circular(1, |s, _| 2.0 * s * s.sqrt());
    let ok = solvability_check(&f, &g, &sq, &vq, 1e-4).unwrap();
    assert!(ok.pass, "{ok:?}");
    let bad = solvability_check(&ScalarField::constant(1, 0.0), &ScalarField::constant(1, 1.0), &sq, &vq, 1e-4).unwrap();
    assert!(!bad.pass && (bad.gap - sphere_area()).abs() < 1e-3, "{bad:?}");
}

#[test]
fn kelvin_transform_preserves_harmonicity() {
    let t = ScalarField::real(1, false, |p| p.t + p.z[0].re);
    let k = kelvin_transform(&t, 1).unwrap();
    let s = StencilParams::new(1e-3, 4).unwrap();
    for p in [HPoint::h1(Complex64::new(0.5, 0.2), 0.3), HPoint::h1(Complex64::new(-1.1, 0.4), -0.7)] {
        let l = sublaplacian_l0(&k, &p, &s).unwrap();
        assert!(l.norm() < 1e-5, "{l}");
    }
}
