//! The interior Neumann problem `L_0 u = f` in the ball, `∂⊥u = g` on the
//! sphere, for circular data on `H_1`.
//!
//! Two routes are provided. The kernel route integrates the data against
//! the Neumann function `N_B`. The integral-equation route splits off a
//! volume potential `u₁` of `f` and represents the rest as a single layer
//! whose density solves `ψ + K'ψ = g - ∂⊥u₁`.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::HPoint;
use crate::kernels::{averaged_fundamental_h1, averaged_normal_derivative_pole_h1};
use crate::layer::{build_kprime, solve_integral_equation, DensityVector, LayerKernel, LayerPotential, NystromRule};
use crate::operators::{horizontal_normal_derivative_inward, horizontal_normal_direction, sublaplacian_l0, CharacteristicPolicy, StencilParams};
use crate::quadrature::{circular_surface_rule, circular_volume_rule, compensated_sum, sphere_quadrature};
use crate::series::{KernelCoefficients, NeumannKernel};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::Arc;

/// Largest fit residual accepted by the kernel route.
pub const MAX_COEFF_RESIDUAL: f64 = 1e-4;

/// `L_0 u = f` in `B`, `∂⊥ u = g` on `∂B`.
#[derive(Debug, Clone)]
pub struct NeumannProblem {
    pub f: ScalarField,
    pub g: ScalarField,
    pub n: usize,
    pub tol_compat: f64,
}

impl NeumannProblem {
    pub fn new(f: ScalarField, g: ScalarField, tol_compat: f64) -> Result<Self> {
        let n = f.n();
        if g.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: g.n() });
        }
        if n != 1 {
            return Err(Error::Unsupported(format!("Neumann solves on H_{n}")));
        }
        if !(tol_compat > 0.0) {
            return Err(Error::InvalidParameter);
        }
        for field in [&f, &g] {
            if !field.is_circular() {
                return Err(Error::NotCircular(f64::NAN));
            }
            let samples: Vec<HPoint> = [(0.4, 0.3, 0.2), (0.1, -0.6, 0.5), (-0.7, 0.2, -0.4), (0.9, 0.3, 0.1)]
                .iter()
                .map(|&(x, y, t)| HPoint::h1(Complex64::new(x, y), t))
                .collect();
            let defect = field.circularity_defect(&samples, 8)?;
            if defect > 1e-10 {
                return Err(Error::NotCircular(defect));
            }
        }
        Ok(Self { f, g, n, tol_compat })
    }

    fn f_st(&self, s: f64, t: f64) -> Result<f64> {
        self.f.eval_re(&ring_point(s, t))
    }

    fn g_alpha(&self, alpha: f64) -> Result<f64> {
        self.g.eval_re(&sphere_point(alpha))
    }
}

fn ring_point(s: f64, t: f64) -> HPoint {
    HPoint::h1(Complex64::new(s.max(0.0).sqrt(), 0.0), t)
}

fn sphere_point(alpha: f64) -> HPoint {
    HPoint::h1(Complex64::new(alpha.cos().max(0.0).sqrt(), 0.0), alpha.sin())
}

/// `∫_B f dv` and `∫_∂B g dσ` for circular data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    pub volume_integral: f64,
    pub surface_integral: f64,
    pub gap: f64,
}

pub fn compatibility(prob: &NeumannProblem) -> Result<Compatibility> {
    let vol = circular_volume_rule(None, None, 12, 1e-3)
        .into_iter()
        .map(|(s, t, w)| Ok(w * prob.f_st(s, t)?))
        .collect::<Result<Vec<_>>>()?;
    let rule = circular_surface_rule(None, 12, 1e-3);
    let surf = rule.x.iter().zip(&rule.w).map(|(a, w)| Ok(w * prob.g_alpha(*a)?)).collect::<Result<Vec<_>>>()?;
    let (vi, si) = (compensated_sum(vol), compensated_sum(surf));
    Ok(Compatibility { volume_integral: vi, surface_integral: si, gap: (vi - si).abs() })
}

fn gate(prob: &NeumannProblem) -> Result<Compatibility> {
    let c = compatibility(prob)?;
    if c.gap > prob.tol_compat {
        return Err(Error::Incompatible { gap: c.gap, tol: prob.tol_compat });
    }
    Ok(c)
}

/// Interior probes on a tensor polar grid with `N ≤ r_max` (the identity
/// first), and non-characteristic boundary probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeGrid {
    pub n_r: usize,
    pub n_alpha: usize,
    pub r_max: f64,
    pub n_boundary: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self { n_r: 3, n_alpha: 5, r_max: 0.7, n_boundary: 6 }
    }
}

impl ProbeGrid {
    pub fn interior(&self) -> Vec<HPoint> {
        let mut out = vec![HPoint::identity(1)];
        for i in 1..=self.n_r {
            let r = self.r_max * i as f64 / self.n_r as f64;
            for j in 0..self.n_alpha {
                let alpha = -FRAC_PI_2 + PI * (j as f64 + 0.5) / self.n_alpha as f64;
                let (s, t) = (r * r * alpha.cos(), r * r * alpha.sin());
                out.push(ring_point(s, t));
            }
        }
        out
    }

    pub fn boundary(&self) -> Vec<HPoint> {
        (0..self.n_boundary)
            .map(|j| sphere_point(-FRAC_PI_2 + PI * (j as f64 + 0.5) / self.n_boundary as f64))
            .collect()
    }
}

/// Discretisation parameters shared by both routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Panel order of the graded `(r, α)` and `α` rules.
    pub order: usize,
    /// Smallest panel at a ring singularity.
    pub min_width: f64,
    /// Surface rule for the integral equation.
    pub bie_n_phi: usize,
    pub bie_n_alpha: usize,
    pub probes: ProbeGrid,
    /// Stencil for the residuals.
    pub stencil: StencilParams,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            order: 8,
            min_width: 1e-4,
            bie_n_phi: 8,
            bie_n_alpha: 24,
            probes: ProbeGrid::default(),
            stencil: StencilParams { h: 2e-2, order: 4 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kernel,
    Bie,
}

/// `r` and `α` of the ring through `η`, `None` at the identity.
fn ring_of(eta: &HPoint) -> (Option<f64>, Option<f64>) {
    let r = eta.gauge_norm();
    if r < 1e-12 {
        (None, None)
    } else {
        (Some(r.min(1.0)), Some(eta.t.atan2(eta.abs_z2())))
    }
}

/// A solution as a function of the target point.
#[derive(Clone)]
pub enum Representation {
    Kernel {
        coeffs: Arc<KernelCoefficients>,
        prob: Arc<NeumannProblem>,
        settings: Arc<SolverSettings>,
    },
    Bie {
        prob: Arc<NeumannProblem>,
        settings: Arc<SolverSettings>,
        layer: Arc<LayerPotential>,
    },
}

impl std::fmt::Debug for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Kernel { .. } => "Representation::Kernel",
            Representation::Bie { .. } => "Representation::Bie",
        })
    }
}

/// `-∫_B ḡ(η, ·) f dv`, which satisfies `L_0 u₁ = f`.
fn volume_potential(prob: &NeumannProblem, settings: &SolverSettings, eta: &HPoint) -> Result<f64> {
    let (r0, a0) = ring_of(eta);
    let (se, te) = (eta.abs_z2(), eta.t);
    let terms = circular_volume_rule(r0, a0, settings.order, settings.min_width)
        .into_iter()
        .map(|(s, t, w)| Ok(-w * prob.f_st(s, t)? * averaged_fundamental_h1(se, te, s, t)?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(terms))
}

/// `∂⊥` at a sphere point of [`volume_potential`].
fn volume_potential_flux(prob: &NeumannProblem, settings: &SolverSettings, eta: &HPoint) -> Result<f64> {
    let (_, a0) = ring_of(eta);
    let (se, te) = (eta.abs_z2(), eta.t);
    let terms = circular_volume_rule(Some(1.0), a0, settings.order, settings.min_width)
        .into_iter()
        .map(|(s, t, w)| Ok(-w * prob.f_st(s, t)? * averaged_normal_derivative_pole_h1(se, te, s, t)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(terms))
}

impl Representation {
    /// The kernel route: `u(η) = ∫_∂B N_B(η, ·) g dσ - ∫_B N_B(η, ·) f dv`.
    pub fn kernel(prob: &NeumannProblem, coeffs: &KernelCoefficients, settings: &SolverSettings) -> Result<Self> {
        if coeffs.n != prob.n {
            return Err(Error::DimensionMismatch { expected: prob.n, found: coeffs.n });
        }
        if !(coeffs.residual <= MAX_COEFF_RESIDUAL) {
            return Err(Error::CoefficientResidual { residual: coeffs.residual, threshold: MAX_COEFF_RESIDUAL });
        }
        Ok(Representation::Kernel {
            coeffs: Arc::new(coeffs.clone()),
            prob: Arc::new(prob.clone()),
            settings: Arc::new(settings.clone()),
        })
    }

    /// The integral-equation route: `u = u₁ + S ψ`.
    pub fn bie(prob: &NeumannProblem, settings: &SolverSettings) -> Result<Self> {
        let sq = sphere_quadrature(1, settings.bie_n_phi, settings.bie_n_alpha)?;
        let kp = build_kprime(&sq, NystromRule::Corrected)?;
        // the data is circular, so one evaluation per ring suffices
        let ring_flux = (0..sq.n_alpha)
            .into_par_iter()
            .map(|i| {
                let p = &sq.nodes[sq.index(i, 0)];
                Ok(prob.g.eval_re(p)? - volume_potential_flux(prob, settings, p)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut values: Vec<Complex64> = (0..sq.len()).map(|k| Complex64::new(ring_flux[k / sq.n_phi], 0.0)).collect();
        // the data passed the gate; remove the quadrature remainder of ∫ g' dσ
        let mean = sq.integrate_values(&values) / sq.total_weight();
        for v in &mut values {
            *v -= mean;
        }
        let gp = DensityVector::new(values, &sq)?;
        let (mut psi, _) = solve_integral_equation(&gp, &sq, &kp, prob.tol_compat.max(1e-8))?;
        for i in 0..sq.n_alpha {
            let ring = &mut psi.values[i * sq.n_phi..(i + 1) * sq.n_phi];
            let m = ring.iter().sum::<Complex64>() / sq.n_phi as f64;
            ring.iter_mut().for_each(|v| *v = Complex64::new(m.re, 0.0));
        }
        let layer = LayerPotential::new(LayerKernel::Single, &psi, &sq)?;
        Ok(Representation::Bie { prob: Arc::new(prob.clone()), settings: Arc::new(settings.clone()), layer: Arc::new(layer) })
    }

    pub fn eval(&self, eta: &HPoint) -> Result<f64> {
        match self {
            Representation::Kernel { coeffs, prob, settings } => {
                let nk = NeumannKernel::new(coeffs, eta)?;
                let (r0, a0) = ring_of(eta);
                let rule = circular_surface_rule(a0, settings.order, settings.min_width);
                let mut terms = Vec::with_capacity(rule.x.len());
                for (a, w) in rule.x.iter().zip(&rule.w) {
                    let xi = sphere_point(*a);
                    terms.push(w * prob.g.eval_re(&xi)? * nk.value(&xi)?);
                }
                // ḡ carries the ring singularity; the rest is smooth in the
                // ball unless the reflected pole approaches the sphere
                let (se, te) = (eta.abs_z2(), eta.t);
                for (s, t, w) in circular_volume_rule(r0, a0, settings.order, settings.min_width) {
                    let f = prob.f_st(s, t)?;
                    if f != 0.0 {
                        terms.push(-w * f * averaged_fundamental_h1(se, te, s, t)?.0);
                    }
                }
                let near = eta.gauge_norm() > 0.8;
                let smooth = circular_volume_rule(near.then_some(1.0), if near { a0 } else { None }, settings.order, 1e-3);
                for (s, t, w) in smooth {
                    let f = prob.f_st(s, t)?;
                    if f != 0.0 {
                        terms.push(-w * f * nk.regular_part(&ring_point(s, t))?);
                    }
                }
                Ok(compensated_sum(terms))
            }
            Representation::Bie { prob, settings, layer } => {
                let u2 = layer.eval(&ring_point(eta.abs_z2(), eta.t))?.re;
                Ok(volume_potential(prob, settings, eta)? + u2)
            }
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Representation::Kernel { .. } => Method::Kernel,
            Representation::Bie { .. } => Method::Bie,
        }
    }

    /// The solution shifted by `-offset`, as a circular field.
    pub fn field(&self, offset: f64) -> ScalarField {
        let me = self.clone();
        ScalarField::try_new(1, true, move |p| Ok(Complex64::new(me.eval(p)? - offset, 0.0)))
    }
}

/// One row of the probe dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub z_re: f64,
    pub z_im: f64,
    pub t: f64,
    pub value: f64,
    pub residual_interior: Option<f64>,
    pub residual_boundary: Option<f64>,
}

impl ProbeSample {
    pub fn point(&self) -> HPoint {
        HPoint::h1(Complex64::new(self.z_re, self.z_im), self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub method: Method,
    /// Interior probes followed by boundary probes.
    pub u_samples: Vec<ProbeSample>,
    pub interior_residual: f64,
    pub boundary_residual: f64,
    pub compat_gap: f64,
    pub constant_mode_note: String,
}

pub const CSV_HEADER: &str = "z_re,z_im,t,value,residual_interior,residual_boundary";

impl SolutionReport {
    pub fn interior_samples(&self) -> impl Iterator<Item = &ProbeSample> {
        self.u_samples.iter().filter(|s| s.residual_boundary.is_none())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for s in &self.u_samples {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{},{}",
                s.z_re,
                s.z_im,
                s.t,
                s.value,
                opt(s.residual_interior),
                opt(s.residual_boundary)
            );
        }
        out
    }
}

/// Per-probe residuals of a candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl Residuals {
    pub fn max_interior(&self) -> f64 {
        self.interior.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_boundary(&self) -> f64 {
        self.boundary.iter().copied().fold(0.0, f64::max)
    }
}

/// `|L_0 u - f|` at interior probes and `|∂⊥u - g|` at boundary probes, the
/// latter from one-sided differences taken inside the ball.
pub fn verify_solution(u: &ScalarField, prob: &NeumannProblem, probes: &ProbeGrid, s: &StencilParams) -> Result<Residuals> {
    let policy = CharacteristicPolicy::default();
    let interior = probes
        .interior()
        .par_iter()
        .map(|p| Ok((sublaplacian_l0(u, p, s)? - prob.f.eval(p)?).norm()))
        .collect::<Result<Vec<_>>>()?;
    let boundary = probes
        .boundary()
        .par_iter()
        .map(|p| Ok((horizontal_normal_derivative_inward(u, p, s, &policy)? - prob.g.eval(p)?).norm()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Residuals { interior, boundary })
}

fn report(rep: &Representation, prob: &NeumannProblem, settings: &SolverSettings, compat: Compatibility) -> Result<SolutionReport> {
    let anchor = rep.eval(&HPoint::identity(1))?;
    let interior = settings.probes.interior();
    let boundary = settings.probes.boundary();
    let points: Vec<&HPoint> = interior.iter().chain(&boundary).collect();
    let h = settings.stencil.h;
    let values = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            if k < interior.len() {
                return Ok(rep.eval(p)? - anchor);
            }
            // trace from inside: quadratic extrapolation along the normal
            let d = horizontal_normal_direction(p)?;
            let at = |j: f64| rep.eval(&d.shift(p, -j * h));
            Ok(3.0 * at(1.0)? - 3.0 * at(2.0)? + at(3.0)? - anchor)
        })
        .collect::<Result<Vec<f64>>>()?;
    let res = verify_solution(&rep.field(anchor), prob, &settings.probes, &settings.stencil)?;
    let u_samples = points
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(k, (p, v))| {
            let (ri, rb) = if k < interior.len() { (Some(res.interior[k]), None) } else { (None, Some(res.boundary[k - interior.len()])) };
            ProbeSample { z_re: p.z[0].re, z_im: p.z[0].im, t: p.t, value: *v, residual_interior: ri, residual_boundary: rb }
        })
        .collect();
    Ok(SolutionReport {
        method: rep.method(),
        u_samples,
        interior_residual: res.max_interior(),
        boundary_residual: res.max_boundary(),
        compat_gap: compat.gap,
        constant_mode_note: "solutions are unique up to an additive constant; values are anchored so that u(e) = 0".into(),
    })
}

/// Solves by integrating the data against `N_B`.
pub fn solve_via_kernel(prob: &NeumannProblem, coeffs: &KernelCoefficients, settings: &SolverSettings) -> Result<SolutionReport> {
    let compat = gate(prob)?;
    let rep = Representation::kernel(prob, coeffs, settings)?;
    report(&rep, prob, settings, compat)
}

/// Solves through the second-kind integral equation for a single layer.
pub fn solve_via_bie(prob: &NeumannProblem, settings: &SolverSettings) -> Result<SolutionReport> {
    let compat = gate(prob)?;
    let rep = Representation::bie(prob, settings)?;
    report(&rep, prob, settings, compat)
}

/// Standard deviation over the common interior probes of the difference of
/// two solutions.
pub fn cross_method_deviation(a: &SolutionReport, b: &SolutionReport) -> Result<f64> {
    let (va, vb): (Vec<_>, Vec<_>) = (a.interior_samples().collect(), b.interior_samples().collect());
    if va.len() != vb.len() || va.is_empty() {
        return Err(Error::LengthMismatch(format!("{} and {} probes", va.len(), vb.len())));
    }
    let d: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x.value - y.value).collect();
    Ok(std_dev(&d))
}

pub fn std_dev(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Largest deviation from `exact` over the interior probes after removing
/// both means, relative to the spread of `exact`.
pub fn mean_anchored_error(rep: &SolutionReport, exact: impl Fn(&HPoint) -> f64) -> f64 {
    let samples: Vec<_> = rep.interior_samples().collect();
    let got: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let want: Vec<f64> = samples.iter().map(|s| exact(&s.point())).collect();
    let (mg, mw) = (got.iter().sum::<f64>() / got.len() as f64, want.iter().sum::<f64>() / want.len() as f64);
    let scale = want.iter().map(|w| (w - mw).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    got.iter().zip(&want).map(|(g, w)| ((g - mg) - (w - mw)).abs()).fold(0.0, f64::max) / scale
}
