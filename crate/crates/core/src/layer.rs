//! Single and double layer potentials on the unit sphere of `H_1`, the
//! operators `K` and `K'`, jump probes, and the second-kind equation.
//!
//! The double-layer kernel restricted to the sphere is not weakly singular:
//! in chart coordinates it behaves like an odd kernel of order `d^{-2}`, and
//! its peak in `φ'` sits where `Im Q = 0` rather than at `φ' = φ`. The
//! Nyström matrices are therefore built mode by mode. For each Fourier mode
//! `m` the kernel is integrated over `φ'` on panels graded toward the root
//! of `Im Q`, which leaves a logarithmically singular kernel in `α'`. That
//! kernel is integrated against the Lagrange basis on the `α` nodes with
//! panels graded toward the target.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::HPoint;
use crate::kernels::{a0_constant, averaged_fundamental_h1, averaged_normal_derivative_h1, averaged_normal_derivative_pole_h1};
use crate::operators::horizontal_normal_direction;
use crate::quadrature::{graded_edges, graded_edges_multi, surface_density, Rule1D, SurfaceQuadrature};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Which kernel a potential or operator integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKernel {
    /// `g_η(ξ)`.
    Single,
    /// `∂⊥` in `ξ` of `g_η(ξ)`.
    Double,
    /// `∂⊥` in `η` of `g_η(ξ)`.
    PoleDerivative,
}

fn kernel_h1(kind: LayerKernel, zp: Complex64, tp: f64, z: Complex64, t: f64) -> f64 {
    let q = Complex64::new((z - zp).norm_sqr(), t - tp + 2.0 * (z * zp.conj()).im);
    let w = q.norm_sqr();
    let a0 = a0_constant(1);
    match kind {
        LayerKernel::Single => a0 / w.sqrt(),
        LayerKernel::Double => {
            let s = z.norm_sqr();
            let v = Complex64::new(s, -t) * q * (2.0 * s - 2.0 * z * zp.conj());
            -a0 / s.sqrt() * w.powf(-1.5) * v.re
        }
        LayerKernel::PoleDerivative => {
            let s = zp.norm_sqr();
            let v = Complex64::new(s, -tp) * q.conj() * (2.0 * s - 2.0 * zp * z.conj());
            -a0 / s.sqrt() * w.powf(-1.5) * v.re
        }
    }
}

/// Ring-averaged kernel times `2π`, in `(s, t)` variables.
fn ring_kernel_h1(kind: LayerKernel, sp: f64, tp: f64, s: f64, t: f64) -> Result<f64> {
    Ok(TAU
        * match kind {
            LayerKernel::Single => averaged_fundamental_h1(sp, tp, s, t)?.0,
            LayerKernel::Double => averaged_normal_derivative_h1(sp, tp, s, t)?,
            LayerKernel::PoleDerivative => averaged_normal_derivative_pole_h1(sp, tp, s, t)?,
        })
}

/// Nodal samples of a boundary density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    pub values: Vec<Complex64>,
    pub quad_id: QuadId,
}

/// Identifies the rule a density is aligned with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadId {
    pub n_phi: usize,
    pub n_alpha: usize,
    pub scale: f64,
}

impl QuadId {
    pub fn of(sq: &SurfaceQuadrature) -> Self {
        Self { n_phi: sq.n_phi, n_alpha: sq.n_alpha, scale: sq.scale }
    }
}

impl DensityVector {
    pub fn new(values: Vec<Complex64>, sq: &SurfaceQuadrature) -> Result<Self> {
        if values.len() != sq.len() {
            return Err(Error::LengthMismatch(format!("{} values for {} nodes", values.len(), sq.len())));
        }
        Ok(Self { values, quad_id: QuadId::of(sq) })
    }

    pub fn zeros(sq: &SurfaceQuadrature) -> Self {
        Self { values: vec![ZERO; sq.len()], quad_id: QuadId::of(sq) }
    }

    pub fn from_field(f: &ScalarField, sq: &SurfaceQuadrature) -> Result<Self> {
        let values = sq.nodes.iter().map(|p| f.eval(p)).collect::<Result<Vec<_>>>()?;
        Self::new(values, sq)
    }

    pub fn to_json(&self) -> ComplexVecJson {
        ComplexVecJson::from_slice(&self.values)
    }

    fn check(&self, sq: &SurfaceQuadrature) -> Result<()> {
        if self.quad_id != QuadId::of(sq) || self.values.len() != sq.len() {
            return Err(Error::LengthMismatch("density not aligned with quadrature".into()));
        }
        Ok(())
    }

    /// `θ`-Fourier coefficients per ring, `[i][m + n_phi/2]`, with `m` from
    /// `-n_phi/2` to `n_phi/2` (both ends carry half weight when even).
    fn ring_modes(&self, sq: &SurfaceQuadrature) -> Vec<Vec<Complex64>> {
        let half = (sq.n_phi / 2) as i64;
        (0..sq.n_alpha)
            .map(|i| {
                (-half..=half)
                    .map(|m| {
                        let mut acc = ZERO;
                        for p in 0..sq.n_phi {
                            let k = sq.index(i, p);
                            acc += self.values[k] * Complex64::from_polar(1.0, -(m as f64) * sq.thetas[k]);
                        }
                        acc / sq.n_phi as f64 * nyquist_weight(m, sq.n_phi)
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest deviation from the ring means.
    pub fn circularity_defect(&self, sq: &SurfaceQuadrature) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..sq.n_alpha {
            let mean: Complex64 = (0..sq.n_phi).map(|p| self.values[sq.index(i, p)]).sum::<Complex64>() / sq.n_phi as f64;
            for p in 0..sq.n_phi {
                worst = worst.max((self.values[sq.index(i, p)] - mean).norm());
            }
        }
        worst
    }
}

/// Real and imaginary parts as plain arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVecJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVecJson {
    fn from_slice(v: &[Complex64]) -> Self {
        Self { re: v.iter().map(|c| c.re).collect(), im: v.iter().map(|c| c.im).collect() }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

fn nyquist_weight(m: i64, n_phi: usize) -> f64 {
    if n_phi.is_multiple_of(2) && m.unsigned_abs() as usize == n_phi / 2 {
        0.5
    } else {
        1.0
    }
}

/// Plain quadrature value of a potential, with a flag for targets closer to
/// a node than the node spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerValue {
    pub value: Complex64,
    pub near_surface: bool,
}

fn node_spacing(sq: &SurfaceQuadrature) -> f64 {
    PI / sq.n_alpha.min(sq.n_phi) as f64
}

fn plain_layer(kind: LayerKernel, phi: &DensityVector, sq: &SurfaceQuadrature, eta: &HPoint) -> Result<LayerValue> {
    phi.check(sq)?;
    if eta.n() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: eta.n() });
    }
    let mut nearest = f64::INFINITY;
    let mut terms = Vec::with_capacity(sq.len());
    for ((node, w), v) in sq.nodes.iter().zip(&sq.weights).zip(&phi.values) {
        let d = crate::group::gauge_distance(eta, node)?;
        nearest = nearest.min(d);
        if d < crate::kernels::POLE_EPS {
            continue;
        }
        terms.push(v * (w * kernel_h1(kind, eta.z[0], eta.t, node.z[0], node.t)));
    }
    let value = Complex64::new(
        crate::quadrature::compensated_sum(terms.iter().map(|c| c.re)),
        crate::quadrature::compensated_sum(terms.iter().map(|c| c.im)),
    );
    Ok(LayerValue { value, near_surface: nearest < node_spacing(sq) })
}

/// `∫ φ g_η dσ` by the surface rule.
pub fn single_layer(phi: &DensityVector, sq: &SurfaceQuadrature, eta: &HPoint) -> Result<LayerValue> {
    plain_layer(LayerKernel::Single, phi, sq, eta)
}

/// `∫ φ ∂⊥g_η dσ` by the surface rule.
pub fn double_layer(phi: &DensityVector, sq: &SurfaceQuadrature, eta: &HPoint) -> Result<LayerValue> {
    plain_layer(LayerKernel::Double, phi, sq, eta)
}

/// Barycentric weights of a node set.
fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let prod: f64 = (0..x.len()).filter(|&k| k != j).map(|k| (x[j] - x[k]) * 2.0).product();
            1.0 / prod
        })
        .collect()
}

/// Values at `xe` of the Lagrange basis on `x`.
fn lagrange_row(x: &[f64], bw: &[f64], xe: f64) -> Vec<f64> {
    if let Some(j) = x.iter().position(|&xj| xj == xe) {
        let mut r = vec![0.0; x.len()];
        r[j] = 1.0;
        return r;
    }
    let terms: Vec<f64> = x.iter().zip(bw).map(|(xj, b)| b / (xe - xj)).collect();
    let total: f64 = terms.iter().sum();
    terms.iter().map(|v| v / total).collect()
}

/// Composite Gauss rule on `[c - π, c + π]` graded symmetrically toward `c`.
fn phi_rule(c: f64, min_width: f64) -> Rule1D {
    let half = Rule1D::composite(&graded_edges(0.0, PI, true, min_width.max(1e-15)), 16);
    let mut r = Rule1D::default();
    for (x, w) in half.x.iter().zip(&half.w).rev() {
        r.x.push(c - x);
        r.w.push(*w);
    }
    for (x, w) in half.x.iter().zip(&half.w) {
        r.x.push(c + x);
        r.w.push(*w);
    }
    r
}

/// `∫ k(η, ξ(α', u)) e^{imu} du` for `m = -m_max..=m_max`, `ξ` on the ring
/// `|z| = ρ'`, `t = t'`.
fn mode_kernels(kind: LayerKernel, eta: (Complex64, f64), rho_p: f64, t_p: f64, m_max: usize, min_width: f64) -> Vec<Complex64> {
    let (zp, tp) = eta;
    let rho = zp.norm();
    let theta = zp.arg();
    let s = if rho > 0.0 { (tp - t_p) / (2.0 * rho * rho_p) } else { 0.0 };
    let c = theta + if s.abs() < 1.0 { s.asin() } else { 0.0 };
    let rule = phi_rule(c, min_width);
    let mut out = vec![ZERO; 2 * m_max + 1];
    for (u, w) in rule.x.iter().zip(&rule.w) {
        let base = Complex64::from_polar(1.0, *u);
        let v = w * kernel_h1(kind, zp, tp, base * rho_p, t_p);
        let mut pos = Complex64::new(v, 0.0);
        let mut neg = pos;
        out[m_max] += pos;
        for m in 1..=m_max {
            pos *= base;
            neg *= base.conj();
            out[m_max + m] += pos;
            out[m_max - m] += neg;
        }
    }
    out
}

fn surface_ring(alpha: f64) -> (f64, f64) {
    (alpha.cos().max(0.0).sqrt(), alpha.sin())
}

/// Width of the innermost `α'` panel at the target.
const ALPHA_MIN_WIDTH: f64 = 1e-3;

/// Product-integration weights `∫ κ_m(η, α') ρ(α') ℓ_j(α') dα'`, indexed
/// `[m + m_max][j]`, for a target `η` on or off the sphere.
fn product_weights(kind: LayerKernel, sq: &SurfaceQuadrature, eta: &HPoint, m_max: usize) -> Vec<Vec<Complex64>> {
    let bw = barycentric_weights(&sq.alphas);
    let (s, t) = (eta.abs_z2(), eta.t);
    let alpha_c = t.atan2(s);
    let delta = (1.0 - eta.gauge_norm()).abs();
    let inner = ALPHA_MIN_WIDTH.min((delta / 2.0).max(1e-5));
    let edges = graded_edges_multi(-FRAC_PI_2, FRAC_PI_2, &[alpha_c], inner, Some(1e-9));
    let rule = Rule1D::composite(&edges, 10);
    let mut acc = vec![vec![ZERO; sq.n_alpha]; 2 * m_max + 1];
    for (ap, wa) in rule.x.iter().zip(&rule.w) {
        let (rho_p, t_p) = surface_ring(*ap);
        if rho_p == 0.0 {
            continue;
        }
        let d = ap - alpha_c;
        let kap = mode_kernels(kind, (eta.z[0], t), rho_p, t_p, m_max, 0.01 * (d * d + delta * delta) + 1e-14);
        let lag = lagrange_row(&sq.alphas, &bw, *ap);
        let wt = wa * surface_density(*ap);
        for (m, k) in kap.iter().enumerate() {
            let kw = k * wt;
            for (j, l) in lag.iter().enumerate() {
                acc[m][j] += kw * l;
            }
        }
    }
    acc
}

/// Singular-diagonal treatment of the Nyström matrices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NystromRule {
    /// Tensor rule with the self-interaction dropped.
    #[default]
    Punctured,
    /// Mode-wise product integration, then the diagonal reset so that the
    /// constant satisfies `K 1 = -1` (rows) or `1ᵀ W K' = -1ᵀ W` (columns).
    Corrected,
}

/// A discretised boundary operator together with its rotation blocks.
#[derive(Debug, Clone)]
pub struct NystromOperator {
    pub kernel: LayerKernel,
    pub rule: NystromRule,
    pub quad_id: QuadId,
    /// Dense matrix acting on nodal values.
    pub matrix: DMatrix<Complex64>,
    /// Discrete modes `m` and the blocks `B_m` (`n_alpha × n_alpha`) with
    /// `matrix = F^H diag(B_m) F` for the unitary ring DFT `F`.
    pub modes: Vec<i64>,
    pub blocks: Vec<DMatrix<Complex64>>,
    thetas: Vec<f64>,
    n_phi: usize,
    n_alpha: usize,
}

/// Assembles `K` (kernel `∂⊥_ξ g_η(ξ)`).
pub fn build_k(sq: &SurfaceQuadrature, rule: NystromRule) -> Result<NystromOperator> {
    build_operator(sq, LayerKernel::Double, rule)
}

/// Assembles `K'` (kernel `∂⊥_η g_η(ξ)`).
pub fn build_kprime(sq: &SurfaceQuadrature, rule: NystromRule) -> Result<NystromOperator> {
    build_operator(sq, LayerKernel::PoleDerivative, rule)
}

fn build_operator(sq: &SurfaceQuadrature, kernel: LayerKernel, rule: NystromRule) -> Result<NystromOperator> {
    if kernel == LayerKernel::Single {
        return Err(Error::Unsupported("Nyström operator for the single-layer kernel".into()));
    }
    if !sq.char_excluded {
        return Err(Error::Unsupported("quadrature containing characteristic nodes".into()));
    }
    let size = sq.len();
    let mut matrix = match rule {
        NystromRule::Punctured => punctured_matrix(sq, kernel),
        NystromRule::Corrected => product_matrix(sq, kernel),
    };
    if rule == NystromRule::Corrected {
        let flux = -1.0;
        match kernel {
            LayerKernel::Double => {
                for r in 0..size {
                    let sum: Complex64 = matrix.row(r).iter().sum();
                    matrix[(r, r)] += flux - sum;
                }
            }
            _ => {
                for c in 0..size {
                    let sum: Complex64 = (0..size).map(|r| matrix[(r, c)] * sq.weights[r]).sum();
                    matrix[(c, c)] += (flux * sq.weights[c] - sum) / sq.weights[c];
                }
            }
        }
    }
    let (modes, blocks) = ring_blocks(&matrix, sq);
    Ok(NystromOperator {
        kernel,
        rule,
        quad_id: QuadId::of(sq),
        matrix,
        modes,
        blocks,
        thetas: sq.thetas.clone(),
        n_phi: sq.n_phi,
        n_alpha: sq.n_alpha,
    })
}

fn punctured_matrix(sq: &SurfaceQuadrature, kernel: LayerKernel) -> DMatrix<Complex64> {
    let size = sq.len();
    let rows: Vec<Vec<Complex64>> = (0..size)
        .into_par_iter()
        .map(|r| {
            let e = &sq.nodes[r];
            (0..size)
                .map(|c| {
                    if r == c {
                        return ZERO;
                    }
                    let x = &sq.nodes[c];
                    Complex64::new(kernel_h1(kernel, e.z[0], e.t, x.z[0], x.t) * sq.weights[c], 0.0)
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(size, size, |r, c| rows[r][c])
}

fn product_matrix(sq: &SurfaceQuadrature, kernel: LayerKernel) -> DMatrix<Complex64> {
    let half = sq.n_phi / 2;
    // rows of one representative node per ring; the rest follow by rotation
    let per_ring: Vec<Vec<Vec<Complex64>>> = (0..sq.n_alpha)
        .into_par_iter()
        .map(|i| product_weights(kernel, sq, &sq.nodes[sq.index(i, 0)], half))
        .collect();
    let size = sq.len();
    let mut matrix = DMatrix::<Complex64>::zeros(size, size);
    for i in 0..sq.n_alpha {
        let theta0 = sq.thetas[sq.index(i, 0)];
        for p in 0..sq.n_phi {
            let r = sq.index(i, p);
            let shift = sq.thetas[r] - theta0;
            for j in 0..sq.n_alpha {
                for q in 0..sq.n_phi {
                    let c = sq.index(j, q);
                    let mut acc = ZERO;
                    for (mi, m) in (-(half as i64)..=half as i64).enumerate() {
                        let ph = m as f64 * (shift - sq.thetas[c]);
                        acc += per_ring[i][mi][j] * Complex64::from_polar(nyquist_weight(m, sq.n_phi), ph);
                    }
                    matrix[(r, c)] = acc / sq.n_phi as f64;
                }
            }
        }
    }
    matrix
}

fn discrete_modes(n_phi: usize) -> Vec<i64> {
    let n = n_phi as i64;
    (-(n - 1) / 2..=n / 2).collect()
}

/// Blocks `B_m[i][j] = Σ_q K[(i,0),(j,q)] e^{im(θ_{jq} - θ_{i0})}`.
fn ring_blocks(matrix: &DMatrix<Complex64>, sq: &SurfaceQuadrature) -> (Vec<i64>, Vec<DMatrix<Complex64>>) {
    let modes = discrete_modes(sq.n_phi);
    let blocks = modes
        .iter()
        .map(|&m| {
            DMatrix::from_fn(sq.n_alpha, sq.n_alpha, |i, j| {
                let r = sq.index(i, 0);
                let mut acc = ZERO;
                for q in 0..sq.n_phi {
                    let c = sq.index(j, q);
                    acc += matrix[(r, c)] * Complex64::from_polar(1.0, m as f64 * (sq.thetas[c] - sq.thetas[r]));
                }
                acc
            })
        })
        .collect();
    (modes, blocks)
}

impl NystromOperator {
    pub fn to_json(&self) -> MatrixJson {
        let (rows, cols) = self.matrix.shape();
        let flat: Vec<Complex64> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| self.matrix[(r, c)]).collect();
        let v = ComplexVecJson::from_slice(&flat);
        MatrixJson { rows, cols, re: v.re, im: v.im }
    }

    /// `⟨Kφ, ψ⟩ - ⟨φ, K'ψ⟩` in the `dσ` pairing, relative to `‖Kφ‖‖ψ‖`.
    pub fn adjoint_defect(&self, other: &NystromOperator, sq: &SurfaceQuadrature, phi: &[Complex64], psi: &[Complex64]) -> f64 {
        let pair = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).zip(&sq.weights).map(|((x, y), w)| x * y * *w).sum() };
        let kphi = self.apply(phi);
        let kpsi = other.apply(psi);
        let scale = pair(&kphi, &kphi).norm().sqrt() * pair(psi, psi).norm().sqrt();
        (pair(&kphi, psi) - pair(phi, &kpsi)).norm() / scale
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let x = DVector::from_column_slice(v);
        (&self.matrix * x).iter().copied().collect()
    }

    /// Unitary ring transform `F v`, indexed `[mode][ring]`.
    fn forward(&self, v: &[Complex64]) -> Vec<DVector<Complex64>> {
        let norm = (self.n_phi as f64).sqrt();
        self.modes
            .iter()
            .map(|&m| {
                DVector::from_fn(self.n_alpha, |i, _| {
                    let mut acc = ZERO;
                    for p in 0..self.n_phi {
                        let k = i * self.n_phi + p;
                        acc += v[k] * Complex64::from_polar(1.0, -(m as f64) * self.thetas[k]);
                    }
                    acc / norm
                })
            })
            .collect()
    }

    fn inverse(&self, modal: &[DVector<Complex64>]) -> Vec<Complex64> {
        let norm = (self.n_phi as f64).sqrt();
        let mut out = vec![ZERO; self.n_phi * self.n_alpha];
        for (mi, &m) in self.modes.iter().enumerate() {
            for i in 0..self.n_alpha {
                for p in 0..self.n_phi {
                    let k = i * self.n_phi + p;
                    out[k] += modal[mi][i] * Complex64::from_polar(1.0, m as f64 * self.thetas[k]) / norm;
                }
            }
        }
        out
    }

    /// Singular values of `I + K`, ascending, each tagged with its mode.
    pub fn identity_plus_singular_values(&self) -> Vec<(f64, i64)> {
        let mut all = Vec::new();
        for (b, &m) in self.blocks.iter().zip(&self.modes) {
            let a = DMatrix::<Complex64>::identity(self.n_alpha, self.n_alpha) + b;
            for s in a.singular_values().iter() {
                all.push((*s, m));
            }
        }
        all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        all
    }

    /// `I + K` as a [`NystromSystem`] with right-hand side `rhs`.
    pub fn system(&self, rhs: &[Complex64]) -> NystromSystem {
        let n = self.matrix.nrows();
        NystromSystem {
            matrix: DMatrix::identity(n, n) + &self.matrix,
            rhs: DVector::from_column_slice(rhs),
            diag_rule: self.rule,
        }
    }

    /// Minimum-norm solution of `(I + K) x = b`, truncating singular values
    /// below `rcond · σ_max` in every block. Returns the solution and the
    /// retained/discarded singular-value extremes.
    pub fn solve_identity_plus(&self, b: &[Complex64], rcond: f64) -> Result<(Vec<Complex64>, SpectralInfo)> {
        if b.len() != self.matrix.nrows() {
            return Err(Error::LengthMismatch(format!("rhs of length {}", b.len())));
        }
        let rhs = self.forward(b);
        let mut smax = 0.0f64;
        let svds: Vec<_> = self
            .blocks
            .iter()
            .map(|blk| {
                let a = DMatrix::<Complex64>::identity(self.n_alpha, self.n_alpha) + blk;
                let svd = a.svd(true, true);
                smax = smax.max(svd.singular_values.max());
                svd
            })
            .collect();
        let cut = rcond * smax;
        let mut info = SpectralInfo { smallest_kept: f64::INFINITY, largest_dropped: 0.0, dropped: 0 };
        let mut modal = Vec::with_capacity(svds.len());
        for (svd, r) in svds.iter().zip(&rhs) {
            let u = svd.u.as_ref().expect("u requested");
            let vt = svd.v_t.as_ref().expect("v_t requested");
            let mut x = DVector::<Complex64>::zeros(self.n_alpha);
            for (k, &s) in svd.singular_values.iter().enumerate() {
                if s <= cut {
                    info.largest_dropped = info.largest_dropped.max(s);
                    info.dropped += 1;
                    continue;
                }
                info.smallest_kept = info.smallest_kept.min(s);
                let coef = u.column(k).dotc(r) / s;
                x += vt.row(k).adjoint() * coef;
            }
            modal.push(x);
        }
        Ok((self.inverse(&modal), info))
    }
}

/// Extremes of the spectrum seen by a truncated solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub smallest_kept: f64,
    pub largest_dropped: f64,
    pub dropped: usize,
}

/// `(I + K) x = rhs` in assembled form.
#[derive(Debug, Clone)]
pub struct NystromSystem {
    pub matrix: DMatrix<Complex64>,
    pub rhs: DVector<Complex64>,
    pub diag_rule: NystromRule,
}

/// Report of [`solve_integral_equation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `‖(I + K')ψ - P g‖` with `P` the projection onto the range.
    pub residual: f64,
    /// Gap between the discarded and the smallest retained singular value.
    pub null_gap: f64,
    /// `|∫ g dσ|`.
    pub compat_gap: f64,
}

/// Default compatibility tolerance for boundary data.
pub const COMPAT_TOL: f64 = 1e-6;

/// Minimum-norm solution of `ψ + K'ψ = g`. Refuses data with `|∫ g dσ|`
/// above `tol`.
pub fn solve_integral_equation(
    g: &DensityVector,
    sq: &SurfaceQuadrature,
    kprime: &NystromOperator,
    tol: f64,
) -> Result<(DensityVector, SolveReport)> {
    g.check(sq)?;
    if kprime.quad_id != QuadId::of(sq) {
        return Err(Error::LengthMismatch("operator built on another quadrature".into()));
    }
    let compat_gap = sq.integrate_values(&g.values).norm();
    if compat_gap > tol {
        return Err(Error::Incompatible { gap: compat_gap, tol });
    }
    let (psi, info) = kprime.solve_identity_plus(&g.values, 1e-8)?;
    // residual against the range component of g: remove the part of g
    // along the left null vector, which is proportional to the weights
    let w2: f64 = sq.weights.iter().map(|w| w * w).sum();
    let along: Complex64 = g.values.iter().zip(&sq.weights).map(|(v, w)| v * *w).sum::<Complex64>() / w2;
    let ag = kprime.apply(&psi);
    let residual = ag
        .iter()
        .zip(&psi)
        .zip(&g.values)
        .zip(&sq.weights)
        .map(|(((a, p), gv), w)| (a + p - (gv - along * *w)).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let report = SolveReport { residual, null_gap: info.smallest_kept - info.largest_dropped, compat_gap };
    Ok((DensityVector::new(psi, sq)?, report))
}

/// A layer potential with a density interpolated in `α` and `θ`, evaluated
/// accurately on, near and away from the sphere.
#[derive(Debug, Clone)]
pub struct LayerPotential {
    pub kind: LayerKernel,
    modes: Vec<Vec<Complex64>>,
    alphas: Vec<f64>,
    bw: Vec<f64>,
    m_max: usize,
    circular: bool,
}

impl LayerPotential {
    pub fn new(kind: LayerKernel, phi: &DensityVector, sq: &SurfaceQuadrature) -> Result<Self> {
        phi.check(sq)?;
        let circular = phi.circularity_defect(sq) <= 1e-13 * phi.values.iter().map(|v| v.norm()).fold(1.0, f64::max);
        Ok(Self {
            kind,
            modes: phi.ring_modes(sq),
            alphas: sq.alphas.clone(),
            bw: barycentric_weights(&sq.alphas),
            m_max: sq.n_phi / 2,
            circular,
        })
    }

    /// Density interpolated at `(α, θ)`.
    pub fn density_at(&self, alpha: f64, theta: f64) -> Complex64 {
        let lag = lagrange_row(&self.alphas, &self.bw, alpha);
        let mut acc = ZERO;
        for (j, l) in lag.iter().enumerate() {
            for (mi, c) in self.modes[j].iter().enumerate() {
                let m = mi as i64 - self.m_max as i64;
                acc += c * l * Complex64::from_polar(1.0, m as f64 * theta);
            }
        }
        acc
    }

    pub fn eval(&self, eta: &HPoint) -> Result<Complex64> {
        if eta.n() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: eta.n() });
        }
        if self.circular {
            return self.eval_circular(eta);
        }
        self.eval_modal(eta)
    }

    /// Mode-by-mode evaluation, used for densities with angular dependence.
    pub fn eval_modal(&self, eta: &HPoint) -> Result<Complex64> {
        if eta.n() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: eta.n() });
        }
        let pw = product_weights(self.kind, &self.sphere_stub(), eta, self.m_max);
        let mut acc = ZERO;
        for (mi, row) in pw.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                acc += w * self.modes[j][mi];
            }
        }
        Ok(acc)
    }

    fn sphere_stub(&self) -> SurfaceQuadrature {
        SurfaceQuadrature {
            n_phi: 2 * self.m_max,
            n_alpha: self.alphas.len(),
            scale: 1.0,
            alphas: self.alphas.clone(),
            alpha_weights: vec![],
            thetas: vec![],
            nodes: vec![],
            weights: vec![],
            char_excluded: true,
        }
    }

    /// Ring-averaged kernels in closed form; valid when the density has no
    /// angular dependence.
    fn eval_circular(&self, eta: &HPoint) -> Result<Complex64> {
        let (s, t) = (eta.abs_z2(), eta.t);
        let alpha_c = t.atan2(s);
        let delta = (1.0 - eta.gauge_norm()).abs();
        let inner = 1e-7f64.max(delta / 4.0).min(1e-3);
        let edges = graded_edges_multi(-FRAC_PI_2, FRAC_PI_2, &[alpha_c], inner, Some(1e-9));
        let rule = Rule1D::composite(&edges, 10);
        let mut acc = ZERO;
        for (ap, wa) in rule.x.iter().zip(&rule.w) {
            let (rho_p, t_p) = surface_ring(*ap);
            if rho_p == 0.0 {
                continue;
            }
            let k = ring_kernel_h1(self.kind, s, t, rho_p * rho_p, t_p)?;
            acc += self.density_at(*ap, 0.0) * (k * wa * surface_density(*ap));
        }
        Ok(acc)
    }

    pub fn field(&self) -> ScalarField {
        let me = self.clone();
        ScalarField::try_new(1, self.circular, move |p| me.eval(p))
    }
}

/// Largest `|k(η, ξ)| N(ξ^{-1}η)^{2n+1}` over distinct node pairs.
pub fn kernel_bound_ratio(kind: LayerKernel, sq: &SurfaceQuadrature) -> Result<f64> {
    let ratios = sq
        .nodes
        .par_iter()
        .map(|e| -> Result<f64> {
            let mut worst = 0.0f64;
            for x in &sq.nodes {
                let d = crate::group::gauge_distance(x, e)?;
                if d < crate::kernels::POLE_EPS {
                    continue;
                }
                worst = worst.max(kernel_h1(kind, e.z[0], e.t, x.z[0], x.t).abs() * d.powi(3));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// One-sided limits of a potential along the horizontal normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpLimits {
    pub outer: f64,
    pub inner: f64,
    /// Difference between extrapolations with all and with all but the
    /// smallest step.
    pub spread: f64,
}

/// Extrapolated limits of the double layer, of `∂⊥` of the single layer and
/// of `∂⊥` of the double layer at a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub double_layer: JumpLimits,
    pub single_normal: JumpLimits,
    pub double_normal: JumpLimits,
}

/// Neville extrapolation to `h = 0` of samples `(h_k, v_k)`.
pub fn richardson(h: &[f64], v: &[f64]) -> f64 {
    let mut p = v.to_vec();
    let n = h.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (h[i + k] * p[i] - h[i] * p[i + 1]) / (h[i + k] - h[i]);
        }
    }
    p[0]
}

fn limits(h: &[f64], v: &[f64]) -> f64 {
    richardson(h, v)
}

/// Evaluates the potentials at `η ± h_k V(η)` and extrapolates to `h = 0`.
pub fn jump_probe(phi: &DensityVector, sq: &SurfaceQuadrature, eta: &HPoint, h_seq: &[f64]) -> Result<JumpReport> {
    if h_seq.len() < 3 || h_seq.windows(2).any(|w| w[1] >= w[0]) || h_seq[0] >= 0.25 {
        return Err(Error::Extrapolation(f64::NAN));
    }
    let dir = horizontal_normal_direction(eta)?;
    let shift = |s: f64| HPoint::h1(eta.z[0] + dir.dz[0] * s, eta.t + dir.dt * s);
    let dl = LayerPotential::new(LayerKernel::Double, phi, sq)?;
    let sl = LayerPotential::new(LayerKernel::Single, phi, sq)?;
    let normal = |pot: &LayerPotential, q: &HPoint, step: f64| -> Result<f64> {
        let d = horizontal_normal_direction(q)?;
        let at = |s: f64| pot.eval(&HPoint::h1(q.z[0] + d.dz[0] * s, q.t + d.dt * s)).map(|c| c.re);
        Ok((8.0 * (at(step)? - at(-step)?) - (at(2.0 * step)? - at(-2.0 * step)?)) / (12.0 * step))
    };
    let mut rows = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
    for &h in h_seq {
        for (side, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let q = shift(sign * h);
            rows[0][side].push(dl.eval(&q)?.re);
            rows[1][side].push(normal(&sl, &q, h / 8.0)?);
            rows[2][side].push(normal(&dl, &q, h / 8.0)?);
        }
    }
    let make = |r: &[Vec<f64>; 2]| -> JumpLimits {
        let outer = limits(h_seq, &r[0]);
        let inner = limits(h_seq, &r[1]);
        let k = h_seq.len() - 1;
        let spread = (outer - limits(&h_seq[..k], &r[0][..k])).abs().max((inner - limits(&h_seq[..k], &r[1][..k])).abs());
        JumpLimits { outer, inner, spread }
    };
    let report = JumpReport { double_layer: make(&rows[0]), single_normal: make(&rows[1]), double_normal: make(&rows[2]) };
    let scale = 1.0 + report.double_layer.outer.abs().max(report.double_layer.inner.abs());
    if !(report.double_layer.spread <= 0.05 * scale) {
        return Err(Error::Extrapolation(report.double_layer.spread));
    }
    Ok(report)
}

/// `h_k = h_0 2^{-k}`, `k = 0..count`.
pub fn geometric_steps(h0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| h0 * 0.5f64.powi(k as i32)).collect()
}
