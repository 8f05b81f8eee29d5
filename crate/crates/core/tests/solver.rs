use heisenberg_neumann::quadrature::sphere_area;
use heisenberg_neumann::series::{project_coefficients, FitGrid, KernelCoefficients};
use heisenberg_neumann::solver::*;
use heisenberg_neumann::*;
use std::sync::OnceLock;

fn coeffs() -> &'static KernelCoefficients {
    static C: OnceLock<KernelCoefficients> = OnceLock::new();
    C.get_or_init(|| project_coefficients(1, 6, 6, &FitGrid::default()).unwrap())
}

fn t_problem() -> NeumannProblem {
    NeumannProblem::new(ScalarField::constant(1, 0.0), ScalarField::circular(1, |s, t| 2.0 * s.sqrt() * t), 1e-6).unwrap()
}

fn z2_problem() -> NeumannProblem {
    NeumannProblem::new(ScalarField::constant(1, 1.0), ScalarField::circular(1, |s, _| 2.0 * s * s.sqrt()), 1e-6).unwrap()
}

fn small() -> SolverSettings {
    SolverSettings { probes: ProbeGrid { n_r: 2, n_alpha: 3, r_max: 0.7, n_boundary: 3 }, ..SolverSettings::default() }
}

struct Solved {
    kernel: SolutionReport,
    bie: SolutionReport,
}

fn t_solved() -> &'static Solved {
    static S: OnceLock<Solved> = OnceLock::new();
    S.get_or_init(|| {
        let (p, s) = (t_problem(), SolverSettings::default());
        Solved { kernel: solve_via_kernel(&p, coeffs(), &s).unwrap(), bie: solve_via_bie(&p, &s).unwrap() }
    })
}

fn z2_solved() -> &'static Solved {
    static S: OnceLock<Solved> = OnceLock::new();
    S.get_or_init(|| {
        let (p, s) = (z2_problem(), SolverSettings::default());
        Solved { kernel: solve_via_kernel(&p, coeffs(), &s).unwrap(), bie: solve_via_bie(&p, &s).unwrap() }
    })
}

#[test]
fn zero_data_gives_zero_solution() {
    let p = NeumannProblem::new(ScalarField::constant(1, 0.0), ScalarField::constant(1, 0.0), 1e-6).unwrap();
    let r = solve_via_kernel(&p, coeffs(), &small()).unwrap();
    assert!(r.u_samples.iter().all(|s| s.value.abs() < 1e-14));
}

#[test]
fn manufactured_t_by_both_routes() {
    let s = t_solved();
    for r in [&s.kernel, &s.bie] {
        assert!(mean_anchored_error(r, |p| p.t) < 1e-4, "{:?}", r.method);
        // anchored at the identity, which is the first probe
        assert_eq!(r.u_samples[0].value, 0.0);
        assert!(r.interior_residual < 1e-4 && r.boundary_residual < 1e-1);
    }
    assert!(cross_method_deviation(&s.kernel, &s.bie).unwrap() < 1e-4);
}

#[test]
fn manufactured_z2_by_both_routes() {
    let s = z2_solved();
    for r in [&s.kernel, &s.bie] {
        assert!(mean_anchored_error(r, |p| p.abs_z2()) < 1e-3, "{:?}", r.method);
        assert!(r.interior_residual < 1e-4 && r.boundary_residual < 1e-1, "{r:?}");
    }
    assert!(cross_method_deviation(&s.kernel, &s.bie).unwrap() < 1e-3);
}

#[test]
fn incompatible_flux_is_rejected_before_solving() {
    let p = NeumannProblem::new(ScalarField::constant(1, 0.0), ScalarField::constant(1, 1.0), 1e-6).unwrap();
    for r in [solve_via_bie(&p, &small()), solve_via_kernel(&p, coeffs(), &small())] {
        match r {
            Err(Error::Incompatible { gap, .. }) => assert!((gap - sphere_area()).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn non_circular_data_is_refused() {
    let f = ScalarField::real(1, true, |p| p.z[0].re);
    let g = ScalarField::constant(1, 0.0);
    assert!(matches!(NeumannProblem::new(f, g.clone(), 1e-6), Err(Error::NotCircular(_))));
    let undeclared = ScalarField::real(1, false, |p| p.t);
    assert!(matches!(NeumannProblem::new(undeclared, g, 1e-6), Err(Error::NotCircular(_))));
}

#[test]
fn poor_coefficients_are_refused() {
    let mut c = coeffs().clone();
    c.residual = 1e-2;
    assert!(matches!(solve_via_kernel(&t_problem(), &c, &small()), Err(Error::CoefficientResidual { .. })));
}

#[test]
fn exact_solutions_verify_up_to_constants() {
    let probes = ProbeGrid::default();
    let st = StencilParams::new(1e-3, 4).unwrap();
    let u = ScalarField::circular(1, |s, _| s);
    let r = verify_solution(&u, &z2_problem(), &probes, &st).unwrap();
    assert!(r.max_interior() < 1e-6 && r.max_boundary() < 1e-6, "{r:?}");
    let shifted = ScalarField::circular(1, |s, _| s + 3.5);
    let r2 = verify_solution(&shifted, &z2_problem(), &probes, &st).unwrap();
    for (a, b) in r.interior.iter().chain(&r.boundary).zip(r2.interior.iter().chain(&r2.boundary)) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn solves_are_linear_in_the_data() {
    let sum = NeumannProblem::new(
        ScalarField::constant(1, 1.0),
        ScalarField::circular(1, |s, t| 2.0 * s.sqrt() * t + 2.0 * s * s.sqrt()),
        1e-6,
    )
    .unwrap();
    let s = small();
    let a = solve_via_bie(&t_problem(), &s).unwrap();
    let b = solve_via_bie(&z2_problem(), &s).unwrap();
    let c = solve_via_bie(&sum, &s).unwrap();
    for ((x, y), z) in a.u_samples.iter().zip(&b.u_samples).zip(&c.u_samples) {
        assert!((x.value + y.value - z.value).abs() < 1e-6);
    }
}

#[test]
fn solutions_are_circular() {
    let rep = Representation::bie(&z2_problem(), &small()).unwrap();
    for (x, t) in [(0.3, 0.2), (0.5, -0.4)] {
        let base = rep.eval(&HPoint::h1(Complex64::new(x, 0.0), t)).unwrap();
        for th in [0.7, 2.0, 4.4] {
            let p = HPoint::h1(Complex64::from_polar(x, th), t);
            assert!((rep.eval(&p).unwrap() - base).abs() < 1e-12);
        }
    }
}

#[test]
fn reports_serialise_to_json_and_csv() {
    let r = &t_solved().bie;
    let back: SolutionReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(&back, r);
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("z_re,z_im,t,value,residual_interior,residual_boundary"));
    assert_eq!(lines.count(), r.u_samples.len());
}

#[test]
fn repeated_solves_are_identical() {
    let a = solve_via_bie(&t_problem(), &small()).unwrap();
    let b = solve_via_bie(&t_problem(), &small()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}
