use crate::error::{Error, Result};
use crate::group::HPoint;
use num_complex::Complex64;
use std::fmt;
use std::sync::Arc;

type EvalFn = dyn Fn(&HPoint) -> Result<Complex64> + Send + Sync;

/// A complex-valued function on `H_n`, tagged with a circularity flag.
#[derive(Clone)]
pub struct ScalarField {
    n: usize,
    circular: bool,
    f: Arc<EvalFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("n", &self.n)
            .field("circular", &self.circular)
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn try_new<F>(n: usize, circular: bool, f: F) -> Self
    where
        F: Fn(&HPoint) -> Result<Complex64> + Send + Sync + 'static,
    {
        Self { n, circular, f: Arc::new(f) }
    }

    pub fn new<F>(n: usize, circular: bool, f: F) -> Self
    where
        F: Fn(&HPoint) -> Complex64 + Send + Sync + 'static,
    {
        Self::try_new(n, circular, move |p| Ok(f(p)))
    }

    pub fn real<F>(n: usize, circular: bool, f: F) -> Self
    where
        F: Fn(&HPoint) -> f64 + Send + Sync + 'static,
    {
        Self::new(n, circular, move |p| Complex64::new(f(p), 0.0))
    }

    /// Circular field given as a real function of `(|z|^2, t)`.
    pub fn circular<F>(n: usize, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::real(n, true, move |p| f(p.abs_z2(), p.t))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::circular(n, move |_, _| c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_circular(&self) -> bool {
        self.circular
    }

    pub fn eval(&self, p: &HPoint) -> Result<Complex64> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: p.n() });
        }
        let v = (self.f)(p)?;
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Evaluation(format!("non-finite value at t = {}", p.t)));
        }
        Ok(v)
    }

    /// Real part of [`eval`](Self::eval).
    pub fn eval_re(&self, p: &HPoint) -> Result<f64> {
        self.eval(p).map(|v| v.re)
    }

    /// `a f + b g`; circular iff both are.
    pub fn combine(a: f64, f: &ScalarField, b: f64, g: &ScalarField) -> Result<Self> {
        if f.n != g.n {
            return Err(Error::DimensionMismatch { expected: f.n, found: g.n });
        }
        let (f, g) = (f.clone(), g.clone());
        Ok(Self::try_new(f.n, f.circular && g.circular, move |p| {
            Ok(a * f.eval(p)? + b * g.eval(p)?)
        }))
    }

    /// Largest `|f(e^{iθ}p) - f(p)|` over the samples and `n_theta` rotations.
    pub fn circularity_defect(&self, samples: &[HPoint], n_theta: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for p in samples {
            let v0 = self.eval(p)?;
            for k in 1..n_theta {
                let th = std::f64::consts::TAU * k as f64 / n_theta as f64;
                worst = worst.max((self.eval(&p.rotate(th))? - v0).norm());
            }
        }
        Ok(worst)
    }
}
