use crate::config::{point_from, ConfigError, RunConfig};
use heisenberg_neumann::kernels::{averaged_fundamental, fundamental_normal_derivative, fundamental_solution};
use heisenberg_neumann::series::{project_coefficients, CoefficientsJson, FitGrid, KernelCoefficients, NeumannKernel};
use heisenberg_neumann::solver::{
    compatibility, cross_method_deviation, solve_via_bie, solve_via_kernel, Compatibility, Method, SolutionReport,
};
use heisenberg_neumann::suite::identity_suite;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("incompatible data: gap {gap:.6e} exceeds tolerance {tol:e}")]
    Incompatible { gap: f64, tol: f64 },
    #[error(transparent)]
    Numerics(#[from] heisenberg_neumann::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Incompatible { .. } => 3,
            Self::Numerics(heisenberg_neumann::Error::Incompatible { .. }) => 3,
            _ => 1,
        }
    }
}

/// Whether the command met its thresholds.
pub type Outcome = Result<bool, CliError>;

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

fn fit_grid(cfg: &RunConfig) -> FitGrid {
    FitGrid { seed: cfg.seed, ..cfg.fit.clone() }
}

fn load_or_fit(cfg: &RunConfig) -> Result<KernelCoefficients, CliError> {
    match &cfg.coefficients {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            let json: CoefficientsJson =
                serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.clone(), source })?;
            Ok(KernelCoefficients::from_json(&json)?)
        }
        None => Ok(project_coefficients(cfg.n, cfg.truncation.m, cfg.truncation.k, &fit_grid(cfg))?),
    }
}

pub fn fit_coeffs(cfg: &RunConfig, out: &Path) -> Outcome {
    let c = project_coefficients(cfg.n, cfg.truncation.m, cfg.truncation.k, &fit_grid(cfg))?;
    let path = out.join(&cfg.outputs.coefficients);
    let json = serde_json::to_string_pretty(&c.to_json()).expect("coefficients serialise");
    write(&path, &json)?;
    println!("residual {:.3e} (threshold {:.1e})", c.residual, cfg.tolerances.fit_residual);
    println!("a00 {:.15e}", c.a[0][0].re);
    println!("wrote {}", path.display());
    Ok(c.residual <= cfg.tolerances.fit_residual)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    compatibility: Compatibility,
    reports: &'a [SolutionReport],
    cross_method_deviation: Option<f64>,
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Outcome {
    let prob = cfg.problem()?;
    let comp = compatibility(&prob)?;
    println!("compatibility gap {:.6e}", comp.gap);
    if comp.gap.abs() > cfg.tolerances.compat {
        return Err(CliError::Incompatible { gap: comp.gap, tol: cfg.tolerances.compat });
    }
    let methods = cfg.method.methods();
    let coeffs = if methods.contains(&Method::Kernel) { Some(load_or_fit(cfg)?) } else { None };
    let mut reports = Vec::new();
    for m in methods {
        let rep = match (m, &coeffs) {
            (Method::Kernel, Some(c)) => solve_via_kernel(&prob, c, &cfg.solver)?,
            _ => solve_via_bie(&prob, &cfg.solver)?,
        };
        let name = serde_json::to_value(m).expect("method serialises");
        let name = name.as_str().expect("method is a string");
        let csv = out.join(cfg.outputs.csv.replace("{method}", name));
        write(&csv, &rep.to_csv())?;
        println!(
            "{name}: interior residual {:.3e}, boundary residual {:.3e}; wrote {}",
            rep.interior_residual,
            rep.boundary_residual,
            csv.display()
        );
        reports.push(rep);
    }
    let deviation = match reports.as_slice() {
        [a, b] => Some(cross_method_deviation(a, b)?),
        _ => None,
    };
    if let Some(d) = deviation {
        println!("cross-method deviation {d:.3e}");
    }
    let path = out.join(&cfg.outputs.report);
    let doc = SolveOutput { compatibility: comp, reports: &reports, cross_method_deviation: deviation };
    write(&path, &serde_json::to_string_pretty(&doc).expect("report serialises"))?;
    println!("wrote {}", path.display());
    let tol = &cfg.tolerances;
    Ok(reports
        .iter()
        .all(|r| r.interior_residual <= tol.interior_residual && r.boundary_residual <= tol.boundary_residual))
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Outcome {
    let checks = identity_suite(&cfg.stencil, cfg.seed);
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    print!("{text}");
    let path = out.join(&cfg.outputs.verify);
    write(&path, &text)?;
    Ok(checks.iter().all(|c| c.pass))
}

#[derive(Serialize)]
struct KernelValues {
    eta: Vec<f64>,
    xi: Vec<f64>,
    fundamental: Option<f64>,
    averaged: Option<f64>,
    normal_derivative: Option<f64>,
    neumann: Option<f64>,
    errors: Vec<String>,
}

pub fn eval_kernel(cfg: &RunConfig, out: &Path) -> Outcome {
    let coeffs = load_or_fit(cfg)?;
    let mut rows = Vec::new();
    for pair in &cfg.pairs {
        let (eta, xi) = (point_from(&pair.eta), point_from(&pair.xi));
        let mut errors = Vec::new();
        let mut keep = |r: heisenberg_neumann::Result<f64>| r.map_err(|e| errors.push(e.to_string())).ok();
        let row = KernelValues {
            eta: pair.eta.clone(),
            xi: pair.xi.clone(),
            fundamental: keep(fundamental_solution(&eta, &xi)),
            averaged: keep(averaged_fundamental(&eta, &xi)),
            normal_derivative: keep(fundamental_normal_derivative(&eta, &xi)),
            neumann: keep(NeumannKernel::new(&coeffs, &eta).and_then(|k| k.value(&xi))),
            errors,
        };
        println!(
            "eta {:?} xi {:?}: g {} gbar {} dg {} N_B {}",
            row.eta,
            row.xi,
            fmt(row.fundamental),
            fmt(row.averaged),
            fmt(row.normal_derivative),
            fmt(row.neumann)
        );
        rows.push(row);
    }
    let path = out.join(&cfg.outputs.kernel_values);
    write(&path, &serde_json::to_string_pretty(&rows).expect("values serialise"))?;
    Ok(rows.iter().all(|r| r.errors.is_empty()))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.12e}"))
}
