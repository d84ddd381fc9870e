//! Quick end-to-end checks run by `fastcaputo selftest`.

use std::sync::Arc;

use crate::caputo::{caputo_l1_direct, direct_caputo_series, fast_caputo_series, FastKernel};
use crate::grid::rates;
use crate::linear::{manufactured_problem, solve_linear_error};
use crate::nonlinear::{solve_nonlinear, AbcParams, ReactionKind};
use crate::quadrature::{gauss_jacobi_power, gauss_legendre};
use crate::scheme::SolveConfig;
use crate::soe::{build_soe, SumOfExponentials};
use crate::special::gamma;
use crate::{GridSpec, Result};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn quadrature_exactness() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in 1..=20 {
        let d = 2 * n - 1;
        let gl = gauss_legendre(n, 0.0, 1.0)?;
        worst = worst.max((gl.integrate(|x| x.powi(d as i32)) * (d + 1) as f64 - 1.0).abs());
        let gj = gauss_jacobi_power(n, 0.5, 1.0)?;
        let exact = 1.0 / (d as f64 + 1.5);
        worst = worst.max((gj.integrate(|x| x.powi(d as i32)) / exact - 1.0).abs());
    }
    Ok((worst <= 1e-12, format!("worst relative moment error {worst:.2e}")))
}

fn soe_certificate() -> Result<(bool, String)> {
    let eps = 1e-6;
    let raw = build_soe(1.5, 1e-3, 1.0, eps)?;
    let reduced = raw.reduce(eps);
    let back = SumOfExponentials::from_json(&reduced.to_json())?;
    let ok = raw.certified_error() <= eps && reduced.certified_error() <= eps && back == reduced;
    Ok((
        ok,
        format!(
            "{} -> {} terms, certificate {:.2e}",
            raw.len(),
            reduced.len(),
            reduced.certified_error()
        ),
    ))
}

fn l1_on_linear_data() -> Result<(bool, String)> {
    let (alpha, dt) = (0.5, 1e-3);
    let samples: Vec<f64> = (0..=1000).map(|k| k as f64 * dt).collect();
    let got = caputo_l1_direct(&samples, dt, alpha)?;
    let exact = 1f64.powf(1.0 - alpha) / gamma(2.0 - alpha);
    let rel = (got / exact - 1.0).abs();
    Ok((rel <= 1e-12, format!("relative error {rel:.2e} at t = 1")))
}

fn fast_matches_direct() -> Result<(bool, String)> {
    let (alpha, dt, eps) = (0.5, 1.0 / 200.0, 1e-9);
    let kernel = Arc::new(FastKernel::build(alpha, dt, 1.0, eps)?);
    let samples: Vec<f64> = (0..=200).map(|k| (3.0 * k as f64 * dt).sin()).collect();
    let fast = fast_caputo_series(kernel, &samples)?;
    let direct = direct_caputo_series(&samples, dt, alpha)?;
    let diff = fast.iter().zip(&direct).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let bound = 10.0 * alpha * eps / gamma(1.0 - alpha);
    Ok((diff <= bound, format!("max difference {diff:.2e} (bound {bound:.2e})")))
}

fn linear_spatial_order() -> Result<(bool, String)> {
    let problem = manufactured_problem(0.5);
    let cfg = SolveConfig::fast(1e-7);
    let mut errors = Vec::new();
    for n in [10, 20, 40] {
        let grid = problem.grid(n, 400)?;
        errors.push(solve_linear_error(&problem, &grid, &cfg)?.0);
    }
    let r = rates(&errors);
    Ok((r.iter().all(|x| (x - 2.0).abs() < 0.2), format!("rates {r:.3?}")))
}

fn nonlinear_matrix_reuse() -> Result<(bool, String)> {
    let grid = GridSpec::new(-6.0, 6.0, 96, 1.0, 32, 0.5)?;
    let abc = AbcParams::default();
    let once = solve_nonlinear(&ReactionKind::Fisher, &grid, &abc, &SolveConfig::direct())?;
    let cfg = SolveConfig::direct().with_reassembly(true);
    let every = solve_nonlinear(&ReactionKind::Fisher, &grid, &abc, &cfg)?;
    let fast = solve_nonlinear(&ReactionKind::Fisher, &grid, &abc, &SolveConfig::fast(1e-9))?;
    let diff = once
        .final_level
        .iter()
        .zip(&fast.final_level)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let identical = once.final_level == every.final_level;
    Ok((
        identical && diff < 1e-8,
        format!("reuse identical: {identical}, fast-direct {diff:.2e}"),
    ))
}

/// Run every check; each takes well under a second in release builds.
pub fn run_selftest() -> Vec<Check> {
    vec![
        check("quadrature exactness n=1..20", quadrature_exactness()),
        check("soe certificate and json round trip", soe_certificate()),
        check("direct L1 exact on u = t", l1_on_linear_data()),
        check("fast evaluator tracks direct", fast_matches_direct()),
        check("linear solver spatial order", linear_spatial_order()),
        check("nonlinear step matrix reuse", nonlinear_matrix_reuse()),
    ]
}
