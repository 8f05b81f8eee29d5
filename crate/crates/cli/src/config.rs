//! The single JSON document driving every subcommand.

use crate::expr::Expr;
use heisenberg_neumann::series::FitGrid;
use heisenberg_neumann::solver::{Method, NeumannProblem, SolverSettings};
use heisenberg_neumann::{HPoint, ScalarField, StencilParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Field { field: field.into(), msg: msg.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Kernel,
    Bie,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            Self::Kernel => vec![Method::Kernel],
            Self::Bie => vec![Method::Bie],
            Self::Both => vec![Method::Kernel, Method::Bie],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// `u = t`: `f = 0`, `g = 2|z|t`.
    TFlux,
    /// `u = |z|²`: `f = n`, `g = 2|z|³`.
    Z2,
    /// `f = 0`, `g = 1`.
    Incompatible,
    Zero,
}

impl Builtin {
    fn sources(self) -> (&'static str, &'static str) {
        match self {
            Self::TFlux => ("0", "2*sqrt(z2)*t"),
            Self::Z2 => ("n", "2*z2^1.5"),
            Self::Incompatible => ("0", "1"),
            Self::Zero => ("0", "0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ProblemSpec {
    Builtin { builtin: Builtin },
    Expressions { f: String, g: String },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self::Builtin { builtin: Builtin::TFlux }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { m: 6, k: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest `|∫f dv − ∫g dσ|` accepted by `solve`.
    pub compat: f64,
    /// Largest held-out misfit accepted from `fit-coeffs`.
    pub fit_residual: f64,
    pub interior_residual: f64,
    pub boundary_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { compat: 1e-6, fit_residual: 1e-4, interior_residual: 1e-2, boundary_residual: 1e-1 }
    }
}

/// File names under `--out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub coefficients: String,
    pub report: String,
    /// `{method}` is replaced by `kernel` or `bie`.
    pub csv: String,
    pub verify: String,
    pub kernel_values: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            coefficients: "coefficients.json".into(),
            report: "report.json".into(),
            csv: "probes_{method}.csv".into(),
            verify: "verify.txt".into(),
            kernel_values: "kernel.json".into(),
        }
    }
}

/// A pair `(η, ξ)` given as `[Re z, Im z, t]` for `n = 1`, or
/// `[Re z_1, Im z_1, …, t]` in general.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelPair {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub seed: u64,
    /// Stencil of the identity suite.
    pub stencil: StencilParams,
    pub truncation: Truncation,
    pub fit: FitGrid,
    pub solver: SolverSettings,
    pub tolerances: Tolerances,
    pub method: MethodChoice,
    pub problem: ProblemSpec,
    /// Coefficient file to load instead of fitting.
    pub coefficients: Option<PathBuf>,
    pub outputs: Outputs,
    pub pairs: Vec<KernelPair>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 1,
            seed: 0,
            stencil: StencilParams { h: 1e-3, order: 4 },
            truncation: Truncation::default(),
            fit: FitGrid::default(),
            solver: SolverSettings::default(),
            tolerances: Tolerances::default(),
            method: MethodChoice::Both,
            problem: ProblemSpec::default(),
            coefficients: None,
            outputs: Outputs::default(),
            pairs: vec![
                KernelPair { eta: vec![0.0, 0.0, 0.0], xi: vec![1.0, 0.0, 0.0] },
                KernelPair { eta: vec![0.3, 0.1, 0.0], xi: vec![0.5, -0.2, 0.4] },
            ],
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::field(field, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::field(field, format!("must be at least {min}, got {v}")))
    }
}

impl RunConfig {
    /// Reads and validates; a missing path gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                Self::from_json(&text)?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." || path == "?" { "<root>".to_string() } else { path };
            ConfigError::field(field, e.into_inner().to_string())
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n != 1 {
            return Err(ConfigError::field("n", format!("only n = 1 is supported, got {}", self.n)));
        }
        positive("stencil.h", self.stencil.h)?;
        if !matches!(self.stencil.order, 2 | 4) {
            return Err(ConfigError::field("stencil.order", format!("must be 2 or 4, got {}", self.stencil.order)));
        }
        at_least("fit.n_alpha", self.fit.n_alpha, 2)?;
        at_least("fit.n_r", self.fit.n_r, 1)?;
        at_least("fit.n_beta", self.fit.n_beta, 1)?;
        if !(self.fit.ratio_max > 0.0 && self.fit.ratio_max < 1.0) {
            return Err(ConfigError::field("fit.ratio_max", format!("must lie in (0, 1), got {}", self.fit.ratio_max)));
        }
        at_least("fit.held_out", self.fit.held_out, 1)?;
        let s = &self.solver;
        at_least("solver.order", s.order, 2)?;
        positive("solver.min_width", s.min_width)?;
        at_least("solver.bie_n_phi", s.bie_n_phi, 8)?;
        at_least("solver.bie_n_alpha", s.bie_n_alpha, 8)?;
        at_least("solver.probes.n_r", s.probes.n_r, 1)?;
        at_least("solver.probes.n_alpha", s.probes.n_alpha, 1)?;
        at_least("solver.probes.n_boundary", s.probes.n_boundary, 1)?;
        if !(s.probes.r_max > 0.0 && s.probes.r_max < 1.0) {
            return Err(ConfigError::field("solver.probes.r_max", format!("must lie in (0, 1), got {}", s.probes.r_max)));
        }
        positive("solver.stencil.h", s.stencil.h)?;
        if !matches!(s.stencil.order, 2 | 4) {
            return Err(ConfigError::field("solver.stencil.order", format!("must be 2 or 4, got {}", s.stencil.order)));
        }
        let t = &self.tolerances;
        positive("tolerances.compat", t.compat)?;
        positive("tolerances.fit_residual", t.fit_residual)?;
        positive("tolerances.interior_residual", t.interior_residual)?;
        positive("tolerances.boundary_residual", t.boundary_residual)?;
        self.problem_expressions()?;
        for (i, p) in self.pairs.iter().enumerate() {
            for (name, v) in [("eta", &p.eta), ("xi", &p.xi)] {
                if v.len() != 2 * self.n + 1 {
                    return Err(ConfigError::field(
                        format!("pairs[{i}].{name}"),
                        format!("needs {} coordinates, got {}", 2 * self.n + 1, v.len()),
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ConfigError::field(format!("pairs[{i}].{name}"), "coordinates must be finite"));
                }
            }
        }
        Ok(())
    }

    fn problem_expressions(&self) -> Result<(Expr, Expr), ConfigError> {
        let (f, g) = match &self.problem {
            ProblemSpec::Builtin { builtin } => {
                let (f, g) = builtin.sources();
                (f.to_string(), g.to_string())
            }
            ProblemSpec::Expressions { f, g } => (f.clone(), g.clone()),
        };
        let f = Expr::parse(&f).map_err(|e| ConfigError::field("problem.f", e.to_string()))?;
        let g = Expr::parse(&g).map_err(|e| ConfigError::field("problem.g", e.to_string()))?;
        Ok((f, g))
    }

    pub fn problem(&self) -> Result<NeumannProblem, ConfigError> {
        let (f, g) = self.problem_expressions()?;
        let n = self.n as f64;
        let field = |e: Expr| ScalarField::circular(self.n, move |s, t| e.eval(s, t, n));
        NeumannProblem::new(field(f), field(g), self.tolerances.compat)
            .map_err(|e| ConfigError::field("problem", e.to_string()))
    }
}

/// `[Re z_1, Im z_1, …, t]` as a point.
pub fn point_from(coords: &[f64]) -> HPoint {
    let (zs, t) = coords.split_at(coords.len() - 1);
    HPoint { z: zs.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(), t: t[0] }
}
