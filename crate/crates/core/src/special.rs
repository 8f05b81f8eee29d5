//! Hypergeometric series, the polynomials `C_m^{(α,β)}`, and the representative
//! spherical harmonics.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::group::HPoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

const REL_TOL: f64 = 1e-12;
const MAX_TERMS: usize = 200_000;

pub fn pochhammer(x: Complex64, m: usize) -> Complex64 {
    (0..m).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (x + j as f64))
}

/// A summed series together with how far it got.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: Complex64,
    pub terms: usize,
    /// Estimated bound on the neglected tail, relative to `|value|`.
    pub tail_bound: f64,
    pub converged: bool,
}

fn is_nonpositive_integer(c: Complex64) -> bool {
    c.im == 0.0 && c.re <= 0.0 && c.re.fract() == 0.0
}

/// `₂F₁(a, b; c; x)` by direct summation, `0 ≤ x < 1`.
pub fn hyp2f1(a: Complex64, b: Complex64, c: Complex64, x: f64) -> Result<SeriesValue> {
    hyp2f1_terms(a, b, c, x, MAX_TERMS)
}

/// As [`hyp2f1`] with an explicit term cap; exceeding it is an error carrying
/// the partial sum.
pub fn hyp2f1_terms(a: Complex64, b: Complex64, c: Complex64, x: f64, max_terms: usize) -> Result<SeriesValue> {
    if is_nonpositive_integer(c) {
        return Err(Error::InvalidParameter);
    }
    if !(0.0..1.0).contains(&x) {
        return Err(Error::ArgumentOutOfRange(x));
    }
    let mut sum = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    if x == 0.0 {
        return Ok(SeriesValue { value: sum, terms: 1, tail_bound: 0.0, converged: true });
    }
    let settle = a.norm() + b.norm() + c.norm() + 2.0;
    for s in 0..max_terms {
        let sf = s as f64;
        term *= (a + sf) * (b + sf) / ((c + sf) * (sf + 1.0)) * x;
        sum += term;
        if term.norm() == 0.0 {
            return Ok(SeriesValue { value: sum, terms: s + 2, tail_bound: 0.0, converged: true });
        }
        if sf + 1.0 > settle {
            let s1 = sf + 1.0;
            let ratio = ((a + s1) * (b + s1) / ((c + s1) * (s1 + 1.0))).norm() * x;
            let rho = ratio.max(x);
            if rho < 1.0 {
                let tail = term.norm() * rho / (1.0 - rho) / sum.norm().max(f64::MIN_POSITIVE);
                if tail < REL_TOL {
                    return Ok(SeriesValue { value: sum, terms: s + 2, tail_bound: tail, converged: true });
                }
            }
        }
    }
    Err(Error::NonConvergence { terms: max_terms, partial_re: sum.re, partial_im: sum.im })
}

/// `F(a, b; a+b; x)` and its derivative for real `a, b > 0`, given both `x`
/// and `y = 1 - x` (the latter computed stably by the caller). Near `x = 1`
/// the logarithmic expansion in powers of `y` is used.
pub fn hyp2f1_logarithmic(a: f64, b: f64, x: f64, y: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter);
    }
    if !(0.0..1.0).contains(&x) || y <= 0.0 {
        return Err(Error::ArgumentOutOfRange(x));
    }
    let c = a + b;
    if x <= 0.5 {
        let re = |v: f64| Complex64::new(v, 0.0);
        let f = hyp2f1(re(a), re(b), re(c), x)?.value.re;
        let df = a * b / c * hyp2f1(re(a + 1.0), re(b + 1.0), re(c + 1.0), x)?.value.re;
        return Ok((f, df));
    }
    let pre = (ln_gamma(c) - ln_gamma(a) - ln_gamma(b)).exp();
    let ly = y.ln();
    let (mut psi1, mut psia, mut psib) = (digamma(1.0), digamma(a), digamma(b));
    let mut ck = 1.0;
    let mut yk = 1.0;
    let (mut f, mut df) = (0.0, 0.0);
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        let hk = 2.0 * psi1 - psia - psib;
        let tf = ck * (hk - ly) * yk;
        // d/dx [c_k (h_k - ln y) y^k] = c_k y^{k-1} (1 - k (h_k - ln y))
        let tdf = ck * yk / y * (1.0 - kf * (hk - ly));
        f += tf;
        df += tdf;
        if k > 2 && tf.abs() <= 1e-17 * f.abs() && tdf.abs() <= 1e-17 * df.abs() {
            return Ok((pre * f, pre * df));
        }
        psi1 += 1.0 / (kf + 1.0);
        psia += 1.0 / (a + kf);
        psib += 1.0 / (b + kf);
        ck *= (a + kf) * (b + kf) / ((kf + 1.0) * (kf + 1.0));
        yk *= y;
    }
    Err(Error::NonConvergence { terms: MAX_TERMS, partial_re: pre * f, partial_im: 0.0 })
}

/// Degree and parameters of `C_m^{(α,β)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CabIndex {
    pub m: usize,
    pub alpha: Complex64,
    pub beta: Complex64,
}

/// `C_m^{(α,β)}(ς) = Σ_p (α)_{m-p}(β)_p / ((m-p)! p!) ς̄^{m-p} ς^p`.
pub fn cab_poly(idx: CabIndex, varsigma: Complex64) -> Complex64 {
    let m = idx.m;
    let conj = varsigma.conj();
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..=m {
        let coef = pochhammer(idx.alpha, m - p) * pochhammer(idx.beta, p)
            / (factorial(m - p) * factorial(p));
        acc += coef * conj.powu((m - p) as u32) * varsigma.powu(p as u32);
    }
    acc
}

/// `C_0^{(α,α)}(ς), …, C_M^{(α,α)}(ς)` for real `α`; the values are real.
pub fn cab_sequence(alpha: f64, varsigma: Complex64, m_max: usize) -> Vec<f64> {
    let a = Complex64::new(alpha, 0.0);
    (0..=m_max).map(|m| cab_poly(CabIndex { m, alpha: a, beta: a }, varsigma).re).collect()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Bidegree `(k, l)` in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonicIndex {
    pub k: usize,
    pub l: usize,
    pub n: usize,
}

/// `c_0 = 1, …, c_r` from the three-term recurrences. For `n = 1` the
/// `|z*|` factor is absent and the vector is `(1)`.
pub fn cq_coeffs(idx: HarmonicIndex, circular: bool) -> Vec<f64> {
    if idx.n == 1 {
        return vec![1.0];
    }
    let (k, l) = if circular { (idx.k, idx.k) } else { (idx.k, idx.l) };
    let r = k.min(l);
    let n = idx.n as f64;
    let mut c = vec![1.0];
    for q in 0..r {
        let qf = q as f64;
        let num = (k as f64 - qf) * (l as f64 - qf);
        c.push(-num * c[q] / ((qf + 1.0) * (n + qf - 1.0)));
    }
    c
}

/// Representative element `Y_{k,l}` (or circular `Y_k`) evaluated at `z`.
pub fn spherical_harmonic(idx: HarmonicIndex, z: &[Complex64], circular: bool) -> Result<Complex64> {
    if z.len() != idx.n {
        return Err(Error::DimensionMismatch { expected: idx.n, found: z.len() });
    }
    let c = cq_coeffs(idx, circular);
    let star2: f64 = z[1..].iter().map(|w| w.norm_sqr()).sum();
    let z1 = z[0];
    let mut acc = Complex64::new(0.0, 0.0);
    for (q, cq) in c.iter().enumerate() {
        let head = if circular {
            Complex64::new(z1.norm_sqr().powi((idx.k - q) as i32), 0.0)
        } else {
            z1.powu((idx.k - q) as u32) * z1.conj().powu((idx.l - q) as u32)
        };
        acc += cq * star2.powi(q as i32) * head;
    }
    Ok(acc)
}

/// Trapezoidal average of `f([e^{iθ}z, t])` over `θ`.
pub fn circular_average(f: &ScalarField, p: &HPoint, q_nodes: usize) -> Result<Complex64> {
    if q_nodes < 8 {
        return Err(Error::ResolutionTooLow(format!("{q_nodes} θ-nodes, need at least 8")));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..q_nodes {
        acc += f.eval(&p.rotate(std::f64::consts::TAU * k as f64 / q_nodes as f64))?;
    }
    Ok(acc / q_nodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn pochhammer_values() {
        assert_eq!(pochhammer(re(7.5), 0), re(1.0));
        assert_eq!(pochhammer(re(1.0), 4), re(24.0));
        assert_eq!(pochhammer(re(0.5), 2), re(0.75));
    }

    #[test]
    fn hyp2f1_closed_forms() {
        assert_eq!(hyp2f1(re(2.0), re(3.0), re(4.0), 0.0).unwrap().value, re(1.0));
        let v = hyp2f1(re(1.0), re(1.0), re(2.0), 0.5).unwrap();
        assert!(v.converged && (v.value.re - 2.0 * 2f64.ln()).abs() < 1e-12);
        // F(1/2, 1/2; 1; x) = (2/π) K(x)
        assert!(hyp2f1(re(1.0), re(1.0), re(0.0), 0.3).is_err());
        assert!(hyp2f1(re(1.0), re(1.0), re(2.0), 1.0).is_err());
    }

    #[test]
    fn hyp2f1_reports_partial_on_cap() {
        match hyp2f1_terms(re(1.0), re(1.0), re(2.0), 0.999, 50) {
            Err(Error::NonConvergence { terms, partial_re, .. }) => {
                assert_eq!(terms, 50);
                assert!(partial_re > 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logarithmic_branch_matches_series() {
        for &(a, x) in &[(0.5, 0.6), (0.5, 0.9), (1.0, 0.75), (1.5, 0.95)] {
            let (f, df) = hyp2f1_logarithmic(a, a, x, 1.0 - x).unwrap();
            let s = hyp2f1(re(a), re(a), re(2.0 * a), x).unwrap().value.re;
            let ds = a * a / (2.0 * a) * hyp2f1(re(a + 1.0), re(a + 1.0), re(2.0 * a + 1.0), x).unwrap().value.re;
            assert!((f - s).abs() < 1e-12 * s, "a={a} x={x}: {f} vs {s}");
            assert!((df - ds).abs() < 1e-10 * ds, "a={a} x={x}: {df} vs {ds}");
        }
    }

    #[test]
    fn cab_small_cases() {
        let one = re(1.0);
        assert_eq!(cab_poly(CabIndex { m: 0, alpha: re(2.3), beta: re(0.7) }, Complex64::new(0.3, 0.9)), one);
        let v = cab_poly(CabIndex { m: 1, alpha: one, beta: one }, Complex64::new(0.0, 1.0));
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn cab_half_is_scaled_legendre() {
        // C_m^{(1/2,1/2)}(t + iR sinθ...) reduces to N^{2m} P_m(t/N²)
        let (s, t) = (0.36f64, -0.48f64);
        let r = (s * s + t * t).sqrt();
        let x = t / r;
        let p = [1.0, x, 0.5 * (3.0 * x * x - 1.0), 0.5 * (5.0 * x * x * x - 3.0 * x)];
        let seq = cab_sequence(0.5, Complex64::new(t, s), 3);
        for m in 0..4 {
            assert!((seq[m] - r.powi(m as i32) * p[m]).abs() < 1e-14);
        }
    }

    #[test]
    fn cq_examples() {
        assert_eq!(cq_coeffs(HarmonicIndex { k: 0, l: 0, n: 3 }, false), vec![1.0]);
        assert_eq!(cq_coeffs(HarmonicIndex { k: 1, l: 1, n: 2 }, false), vec![1.0, -1.0]);
        assert_eq!(cq_coeffs(HarmonicIndex { k: 2, l: 2, n: 2 }, true)[1], -4.0);
        assert_eq!(cq_coeffs(HarmonicIndex { k: 3, l: 3, n: 1 }, true), vec![1.0]);
    }

    #[test]
    fn harmonic_trivial_and_n1() {
        let z = [Complex64::new(0.3, -0.2)];
        let y = spherical_harmonic(HarmonicIndex { k: 0, l: 0, n: 1 }, &z, false).unwrap();
        assert_eq!(y, re(1.0));
        let y = spherical_harmonic(HarmonicIndex { k: 2, l: 2, n: 1 }, &z, true).unwrap();
        assert!((y.re - z[0].norm_sqr().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn average_of_z_vanishes() {
        let f = ScalarField::new(1, false, |p| p.z[0]);
        let p = HPoint::h1(Complex64::new(0.4, 0.1), 0.2);
        assert!(circular_average(&f, &p, 64).unwrap().norm() < 1e-15);
        assert!(circular_average(&f, &p, 4).is_err());
    }
}
