//! Series forms of the averaged kernel and its Kelvin image, the harmonic
//! correction, the fitted coefficients `a_{m;k}` and the Neumann kernel `N_B`.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::{inverse, HPoint};
use crate::kernels::{a0_constant, averaged_fundamental, averaged_normal_derivative_h1};
use crate::quadrature::{circular_surface_rule, compensated_sum, gauss_legendre, sphere_area};
use crate::special::{cab_sequence, spherical_harmonic, HarmonicIndex};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Condition number above which [`project_coefficients`] refuses to answer.
pub const MAX_CONDITION: f64 = 1e12;

/// Table `a_{m;k}` for `m ≤ M`, `k ≤ K`, plus the constant `b_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCoefficients {
    pub n: usize,
    pub m_max: usize,
    pub k_max: usize,
    /// Indexed `[m][k]`.
    pub a: Vec<Vec<Complex64>>,
    /// `b_0` normalising `∫ N_B(e, ·) dσ = 0` at the pole `η = e`.
    pub b0: f64,
    /// Largest relative misfit on the held-out pairs.
    pub residual: f64,
}

/// JSON form `{n, M, K, b0, a: [[m, k, re, im], …], residual}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsJson {
    pub n: usize,
    #[serde(rename = "M")]
    pub m_max: usize,
    #[serde(rename = "K")]
    pub k_max: usize,
    pub b0: f64,
    pub a: Vec<(usize, usize, f64, f64)>,
    pub residual: f64,
}

impl KernelCoefficients {
    pub fn zeros(n: usize, m_max: usize, k_max: usize) -> Self {
        Self {
            n,
            m_max,
            k_max,
            a: vec![vec![Complex64::new(0.0, 0.0); k_max + 1]; m_max + 1],
            b0: 0.0,
            residual: 0.0,
        }
    }

    /// Whether `(m, k)` carries a basis function. On `H_1` the functions
    /// `|z|^{2k}`, `k ≥ 1`, are not harmonic, so only `k = 0` is kept.
    pub fn is_active(&self, _m: usize, k: usize) -> bool {
        self.n > 1 || k == 0
    }

    pub fn to_json(&self) -> CoefficientsJson {
        let mut a = Vec::new();
        for (m, row) in self.a.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                a.push((m, k, v.re, v.im));
            }
        }
        CoefficientsJson { n: self.n, m_max: self.m_max, k_max: self.k_max, b0: self.b0, a, residual: self.residual }
    }

    pub fn from_json(j: &CoefficientsJson) -> Result<Self> {
        let mut c = Self::zeros(j.n, j.m_max, j.k_max);
        for &(m, k, re, im) in &j.a {
            if m > j.m_max || k > j.k_max || !re.is_finite() || !im.is_finite() {
                return Err(Error::LengthMismatch(format!("entry ({m}, {k}) outside table or not finite")));
            }
            c.a[m][k] = Complex64::new(re, im);
        }
        c.b0 = j.b0;
        c.residual = j.residual;
        Ok(c)
    }

    /// `C_m^{(n/2+k, n/2+k)}(ς_p) Y_k(z_p)`, indexed `[m][k]`.
    fn factors(&self, p: &HPoint) -> Result<Vec<Vec<f64>>> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: p.n() });
        }
        let half = self.n as f64 / 2.0;
        let mut out = vec![vec![0.0; self.k_max + 1]; self.m_max + 1];
        for k in 0..=self.k_max {
            if !self.is_active(0, k) {
                continue;
            }
            let cs = cab_sequence(half + k as f64, p.varsigma(), self.m_max);
            let y = spherical_harmonic(HarmonicIndex { k, l: k, n: self.n }, &p.z, true)?.re;
            for m in 0..=self.m_max {
                out[m][k] = cs[m] * y;
            }
        }
        Ok(out)
    }
}

/// A truncated sum and an estimate of the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncated {
    pub value: f64,
    pub tail: f64,
}

fn geometric_tail(scale: f64, rho: f64, m_max: usize) -> f64 {
    scale * rho.powi(m_max as i32 + 1) / (1.0 - rho)
}

/// Series of `ḡ_{η^{-1}}(ξ^{-1})` in the regime `N(η) < N(ξ)`.
pub fn series_averaged_fundamental(c: &KernelCoefficients, eta: &HPoint, xi: &HPoint) -> Result<Truncated> {
    let (ne, nx) = (eta.gauge_norm(), xi.gauge_norm());
    if ne >= nx {
        return Err(Error::RegimeViolation(format!("N(η) = {ne} ≥ N(ξ) = {nx}")));
    }
    let (fe, fx) = (c.factors(eta)?, c.factors(xi)?);
    let mut terms = Vec::new();
    for m in 0..=c.m_max {
        for k in 0..=c.k_max {
            let scale = nx.powi(-4 * (m + k) as i32);
            terms.push(c.a[m][k].re * scale * fx[m][k] * fe[m][k]);
        }
    }
    let pre = nx.powi(-2 * c.n as i32);
    let rho = (ne / nx).powi(2);
    Ok(Truncated {
        value: pre * compensated_sum(terms),
        tail: geometric_tail(pre * a0_constant(c.n), rho, c.m_max),
    })
}

/// Series of the Kelvin image `K(ḡ_{η^{-1}})(ξ)`, decaying for `N(η)N(ξ) < 1`.
pub fn series_kelvin(c: &KernelCoefficients, eta: &HPoint, xi: &HPoint) -> Result<Truncated> {
    let prod = eta.gauge_norm() * xi.gauge_norm();
    if prod >= 1.0 {
        return Err(Error::RegimeViolation(format!("N(η)N(ξ) = {prod} ≥ 1")));
    }
    let (fe, fx) = (c.factors(eta)?, c.factors(xi)?);
    let terms = (0..=c.m_max).flat_map(|m| (0..=c.k_max).map(move |k| (m, k)));
    let value = compensated_sum(terms.map(|(m, k)| c.a[m][k].re * fx[m][k] * fe[m][k]));
    Ok(Truncated { value, tail: geometric_tail(a0_constant(c.n), prod * prod, c.m_max) })
}

/// Harmonic correction `Σ_{m+k ≥ 1} (n/(m+k)) a_{m;k} C_m(ς_ξ) Y_k(z) C_m(ς_η) Y_k(z') + b_0`.
///
/// Each term has the same bidegree as the matching Kelvin term, so its
/// `∂⊥` on the sphere is `n/(m+k)` times the Kelvin term's `2(m+k)|z|`.
pub fn harmonic_correction(c: &KernelCoefficients, eta: &HPoint, xi: &HPoint) -> Result<Truncated> {
    harmonic_correction_with(c, eta, xi, c.b0)
}

fn harmonic_correction_with(c: &KernelCoefficients, eta: &HPoint, xi: &HPoint, b0: f64) -> Result<Truncated> {
    let prod = eta.gauge_norm() * xi.gauge_norm();
    if prod >= 1.0 {
        return Err(Error::RegimeViolation(format!("N(η)N(ξ) = {prod} ≥ 1")));
    }
    let (fe, fx) = (c.factors(eta)?, c.factors(xi)?);
    let n = c.n as f64;
    let mut terms = vec![b0];
    for m in 0..=c.m_max {
        for k in 0..=c.k_max {
            if m + k >= 1 {
                terms.push(n / (m + k) as f64 * c.a[m][k].re * fx[m][k] * fe[m][k]);
            }
        }
    }
    Ok(Truncated { value: compensated_sum(terms), tail: geometric_tail(a0_constant(c.n), prod * prod, c.m_max) })
}

/// `N_B(η, ·)` for a fixed pole, with `b_0` chosen so that `∫ N_B dσ = 0`.
#[derive(Debug, Clone)]
pub struct NeumannKernel {
    pub coeffs: KernelCoefficients,
    pub eta: HPoint,
    pub b0: f64,
}

impl NeumannKernel {
    pub fn new(coeffs: &KernelCoefficients, eta: &HPoint) -> Result<Self> {
        let mut nk = Self { coeffs: coeffs.clone(), eta: eta.clone(), b0: 0.0 };
        if coeffs.n == 1 {
            let (s0, t0) = (eta.abs_z2(), eta.t);
            let alpha0 = if s0 == 0.0 && t0 == 0.0 { None } else { Some(t0.atan2(s0)) };
            let rule = circular_surface_rule(alpha0, 12, 1e-6);
            let vals = rule
                .x
                .iter()
                .zip(&rule.w)
                .map(|(a, w)| Ok(w * nk.value(&HPoint::h1(Complex64::new(a.cos().sqrt(), 0.0), a.sin()))?))
                .collect::<Result<Vec<_>>>()?;
            nk.b0 = -compensated_sum(vals) / sphere_area();
        } else {
            nk.b0 = coeffs.b0;
        }
        Ok(nk)
    }

    /// `ḡ_η(ξ) + K(ḡ_{η^{-1}})(ξ) + h(η, ξ)`.
    pub fn value(&self, xi: &HPoint) -> Result<f64> {
        Ok(averaged_fundamental(&self.eta, xi)? + self.regular_part(xi)?)
    }

    /// `N_B - ḡ`, harmonic in `ξ`.
    pub fn regular_part(&self, xi: &HPoint) -> Result<f64> {
        Ok(series_kelvin(&self.coeffs, &self.eta, xi)?.value
            + harmonic_correction_with(&self.coeffs, &self.eta, xi, self.b0)?.value)
    }

    /// `∂⊥` in `ξ` on `H_1`, from the closed form of `ḡ` and the degrees of
    /// the series terms.
    pub fn normal_derivative(&self, xi: &HPoint) -> Result<f64> {
        if self.coeffs.n != 1 {
            return Err(Error::Unsupported("analytic ∂⊥ of N_B for n > 1".into()));
        }
        let c = &self.coeffs;
        let (fe, fx) = (c.factors(&self.eta)?, c.factors(xi)?);
        let r = xi.abs_z();
        let mut terms = vec![averaged_normal_derivative_h1(self.eta.abs_z2(), self.eta.t, xi.abs_z2(), xi.t)?];
        for m in 0..=c.m_max {
            for k in 0..=c.k_max {
                if m + k >= 1 {
                    let d = 2.0 * (m + k) as f64;
                    let w = 1.0 + c.n as f64 / (m + k) as f64;
                    terms.push(r * d * w * c.a[m][k].re * fx[m][k] * fe[m][k]);
                }
            }
        }
        Ok(compensated_sum(terms))
    }

    /// `ξ ↦ N_B(η, ξ)` as a field.
    pub fn field(&self) -> ScalarField {
        let me = self.clone();
        ScalarField::try_new(self.coeffs.n, true, move |p| Ok(Complex64::new(me.value(p)?, 0.0)))
    }
}

/// `N_B(η, ξ)`; builds the per-pole normalisation on every call.
pub fn neumann_kernel(c: &KernelCoefficients, eta: &HPoint, xi: &HPoint) -> Result<f64> {
    NeumannKernel::new(c, eta)?.value(xi)
}

/// Sample design for [`project_coefficients`]. `ξ` runs over the unit
/// sphere and `η` over the ball of radius `ratio_max`, on Gauss–Legendre
/// grids; the fit is the weighted least-squares projection on that product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitGrid {
    pub n_alpha: usize,
    pub n_r: usize,
    /// Directions of `z` relative to `z'` for `n ≥ 2`.
    pub n_beta: usize,
    pub ratio_max: f64,
    pub held_out: usize,
    pub seed: u64,
    /// Fit only at the pole `η = e`.
    pub pole_at_identity: bool,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self { n_alpha: 24, n_r: 16, n_beta: 6, ratio_max: 0.5, held_out: 2000, seed: 0, pole_at_identity: false }
    }
}

impl FitGrid {
    /// Twice the resolution in every direction.
    pub fn refined(&self) -> Self {
        Self { n_alpha: 2 * self.n_alpha, n_r: 2 * self.n_r, n_beta: 2 * self.n_beta, ..self.clone() }
    }
}

fn point_in(n: usize, gauge: f64, alpha: f64, beta: f64) -> HPoint {
    let rho = gauge * alpha.cos().max(0.0).sqrt();
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    if n == 1 {
        z[0] = Complex64::new(rho, 0.0);
    } else {
        z[0] = Complex64::new(rho * beta.cos(), 0.0);
        z[1] = Complex64::new(rho * beta.sin(), 0.0);
    }
    HPoint { z, t: gauge * gauge * alpha.sin() }
}

/// Least-squares fit of `a_{m;k}` against the closed form of `ḡ`.
pub fn project_coefficients(n: usize, m_max: usize, k_max: usize, grid: &FitGrid) -> Result<KernelCoefficients> {
    if grid.n_alpha < 2 || grid.n_r < 1 || grid.n_beta < 1 || !(grid.ratio_max > 0.0 && grid.ratio_max < 1.0) {
        return Err(Error::ResolutionTooLow(format!("{grid:?}")));
    }
    let mut coeffs = KernelCoefficients::zeros(n, m_max, k_max);
    let cols: Vec<(usize, usize)> = (0..=m_max)
        .flat_map(|m| (0..=k_max).map(move |k| (m, k)))
        .filter(|&(m, k)| coeffs.is_active(m, k))
        .collect();

    let (ga, wa) = gauss_legendre(grid.n_alpha);
    let (gr, wr) = gauss_legendre(grid.n_r);
    let (gb, wb) = if n == 1 { (vec![0.0], vec![2.0]) } else { gauss_legendre(grid.n_beta) };
    let mut xis = Vec::new();
    for (a, w) in ga.iter().zip(&wa) {
        for (b, v) in gb.iter().zip(&wb) {
            xis.push((point_in(n, 1.0, a * FRAC_PI_2, (b + 1.0) * FRAC_PI_2 / 2.0), w * v));
        }
    }
    let mut etas = Vec::new();
    if grid.pole_at_identity {
        etas.push((HPoint::identity(n), 1.0));
    } else {
        for (r, w) in gr.iter().zip(&wr) {
            let r = (r + 1.0) / 2.0 * grid.ratio_max;
            for (a, v) in ga.iter().zip(&wa) {
                etas.push((point_in(n, r, a * FRAC_PI_2, 0.0), w * v * r.powi(3)));
            }
        }
    }

    let rows = xis.len() * etas.len();
    let mut mat = DMatrix::<f64>::zeros(rows, cols.len());
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut row = 0;
    for (xi, wx) in &xis {
        let fx = coeffs.factors(xi)?;
        let nx = xi.gauge_norm();
        for (eta, we) in &etas {
            let fe = coeffs.factors(eta)?;
            let target = averaged_fundamental(eta, xi)?;
            let sw = (wx * we).sqrt();
            for (c, &(m, k)) in cols.iter().enumerate() {
                let basis = nx.powi(-2 * n as i32 - 4 * (m + k) as i32) * fx[m][k] * fe[m][k];
                mat[(row, c)] = sw * basis / target;
            }
            rhs[row] = sw;
            row += 1;
        }
    }
    let norms: Vec<f64> = (0..cols.len()).map(|c| mat.column(c).norm()).collect();
    for (c, s) in norms.iter().enumerate() {
        if *s == 0.0 {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        mat.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = mat.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|e| Error::Evaluation(e.to_string()))?;
    for (c, &(m, k)) in cols.iter().enumerate() {
        coeffs.a[m][k] = Complex64::new(sol[c] / norms[c], 0.0);
    }
    coeffs.residual = held_out_residual(&coeffs, grid)?;
    coeffs.b0 = if n == 1 { NeumannKernel::new(&coeffs, &HPoint::identity(1))?.b0 } else { 0.0 };
    Ok(coeffs)
}

/// Largest `|series - ḡ_{η^{-1}}(ξ^{-1})| / ḡ` over random pairs with
/// `N(η)/N(ξ) ≤ ratio_max`.
pub fn held_out_residual(c: &KernelCoefficients, grid: &FitGrid) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed ^ 0x05ee_df17);
    let mut worst = 0.0f64;
    for _ in 0..grid.held_out {
        let nx = rng.gen_range(0.2..1.0);
        let xi = random_point(&mut rng, c.n, nx);
        let eta = if grid.pole_at_identity {
            HPoint::identity(c.n)
        } else {
            let ne = rng.gen_range(0.0..grid.ratio_max) * nx;
            random_point(&mut rng, c.n, ne)
        };
        let exact = averaged_fundamental(&inverse(&eta), &inverse(&xi))?;
        let s = series_averaged_fundamental(c, &eta, &xi)?.value;
        worst = worst.max((s - exact).abs() / exact);
    }
    Ok(worst)
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, gauge: f64) -> HPoint {
    let alpha: f64 = rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
    let mut z: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    let rho = gauge * alpha.cos().sqrt();
    for c in z.iter_mut() {
        *c *= rho / norm;
    }
    HPoint { z, t: gauge * gauge * alpha.sin() }
}
