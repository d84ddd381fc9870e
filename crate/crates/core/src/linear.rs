//! Linear time-fractional diffusion `D^alpha u = u_xx + f` on a bounded
//! window of the real line, closed by nonreflecting boundary rows that mix
//! Caputo derivatives of order `alpha` and `alpha/2`.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use crate::banded::{BandedSystem, ThomasFactor};
use crate::error::{Error, Result};
use crate::grid::{grad_norm_sq, l2_norm_sq, max_norm, GridSpec, Variant};
use crate::scheme::{make_memory, SolveConfig, SolveStats};
use crate::special::gamma;

pub type SpaceTimeField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SpaceField = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Data of the initial value problem restricted to `[x_left, x_right]`.
#[derive(Clone)]
pub struct LinearProblem {
    pub alpha: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub horizon: f64,
    pub source: SpaceTimeField,
    pub initial: SpaceField,
    pub exact: Option<SpaceTimeField>,
}

impl std::fmt::Debug for LinearProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearProblem")
            .field("alpha", &self.alpha)
            .field("x_left", &self.x_left)
            .field("x_right", &self.x_right)
            .field("horizon", &self.horizon)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl LinearProblem {
    /// Grid over the problem's window and horizon.
    pub fn grid(&self, n_space: usize, n_time: usize) -> Result<GridSpec> {
        GridSpec::new(self.x_left, self.x_right, n_space, self.horizon, n_time, self.alpha)
    }

    /// Homogeneous problem with the given initial data.
    pub fn homogeneous(alpha: f64, x_left: f64, x_right: f64, horizon: f64, initial: SpaceField) -> Self {
        Self {
            alpha,
            x_left,
            x_right,
            horizon,
            source: Arc::new(|_, _| 0.0),
            initial,
            exact: None,
        }
    }
}

fn bump(x: f64) -> f64 {
    if (0.0..=PI).contains(&x) {
        let g = x * (PI - x);
        g * g * g * g
    } else {
        0.0
    }
}

/// Manufactured problem on `[0, pi] x [0, 1]` with exact solution
/// `x^4 (pi - x)^4 (e^{-x} t^{3+alpha} + 1)`.
pub fn manufactured_problem(alpha: f64) -> LinearProblem {
    let c = gamma(4.0 + alpha) / 6.0;
    let source = move |x: f64, t: f64| {
        if !(0.0..=PI).contains(&x) {
            return 0.0;
        }
        let g = x * (PI - x);
        let g2 = g * g;
        let ex = (-x).exp();
        let poly = x * x * (56.0 - 16.0 * x + x * x) - 2.0 * PI * x * (28.0 - 12.0 * x + x * x)
            + PI * PI * (12.0 - 8.0 * x + x * x);
        c * g2 * g2 * ex * t.powi(3)
            - g2 * (t.powf(3.0 + alpha) * ex * poly + 4.0 * (3.0 * PI * PI - 14.0 * PI * x + 14.0 * x * x))
    };
    let exact = move |x: f64, t: f64| bump(x) * ((-x).exp() * t.powf(3.0 + alpha) + 1.0);
    LinearProblem {
        alpha,
        x_left: 0.0,
        x_right: PI,
        horizon: 1.0,
        source: Arc::new(source),
        initial: Arc::new(bump),
        exact: Some(Arc::new(exact)),
    }
}

/// Constants of the prior estimate at `t_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    pub rho: f64,
    pub mu: f64,
    pub varrho: f64,
    pub nu: f64,
}

impl StabilityConstants {
    /// Evaluate at `t_n = n dt` for kernel tolerance `eps` (0 for the direct scheme).
    pub fn new(alpha: f64, dt: f64, n: usize, eps: f64) -> Result<Self> {
        let t_n = n as f64 * dt;
        let t_prev = (n.max(1) - 1) as f64 * dt;
        let half = 0.5 * alpha;
        let c = Self {
            rho: (t_n.powf(1.0 - alpha) - alpha * (1.0 - alpha) * eps * t_prev * dt) / gamma(2.0 - alpha),
            mu: (t_n.powf(-alpha) - 2.0 * alpha * eps * t_prev) / gamma(1.0 - alpha),
            varrho: (t_n.powf(1.0 - half) - half * (1.0 - half) * eps * t_prev * dt) / gamma(2.0 - half),
            nu: (t_n.powf(-half) - alpha * eps * t_prev) / gamma(1.0 - half),
        };
        if !(c.mu > 0.0 && c.nu > 0.0) {
            return Err(Error::Configuration(format!(
                "kernel tolerance {eps:e} is too large for a stable estimate at t = {t_n}"
            )));
        }
        Ok(c)
    }

    /// Sobolev parameter balancing the two energy terms for a window of length `l`.
    pub fn theta(&self, l: f64) -> f64 {
        2.0 * (1.0 + (1.0 + l * l * self.mu).sqrt()) / (l * self.mu)
    }
}

/// Computed levels `u^0..u^{N_T}` together with run statistics.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub grid: GridSpec,
    pub levels: Vec<Vec<f64>>,
    pub stats: SolveStats,
}

fn assemble(grid: &GridSpec, sigma: f64, sigma_half: f64) -> Result<BandedSystem> {
    let n = grid.n_space;
    let h = grid.h();
    let ih2 = 1.0 / (h * h);
    let mut a = BandedSystem::new(n + 1)?;
    a.set_row(0, 0.0, sigma + 2.0 * ih2 + 2.0 / h * sigma_half, -2.0 * ih2);
    for i in 1..n {
        a.set_row(i, -ih2, sigma + 2.0 * ih2, -ih2);
    }
    a.set_row(n, -2.0 * ih2, sigma + 2.0 * ih2 + 2.0 / h * sigma_half, 0.0);
    Ok(a)
}

fn factor(grid: &GridSpec, sigma: f64, sigma_half: f64) -> Result<ThomasFactor> {
    assemble(grid, sigma, sigma_half)?.factor()
}

/// March the scheme, handing every level `u^n` (`n = 0..=N_T`) to `observer`.
pub fn solve_linear_with(
    problem: &LinearProblem,
    grid: &GridSpec,
    cfg: &SolveConfig,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> Result<SolveStats> {
    grid.validate()?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    if !same(grid.x_left, problem.x_left) || !same(grid.x_right, problem.x_right) || grid.alpha != problem.alpha {
        return Err(Error::Configuration(
            "grid does not match the problem window or order".into(),
        ));
    }
    let alpha = grid.alpha;
    let n = grid.n_space;
    let h = grid.h();
    let horizon = grid.horizon();
    if cfg.variant == Variant::Fast {
        StabilityConstants::new(alpha, grid.dt, grid.n_time, cfg.eps)?;
    }

    let setup = Instant::now();
    let mut full = make_memory(cfg, alpha, grid.dt, horizon, n + 1, false)?;
    let mut edge = make_memory(cfg, 0.5 * alpha, grid.dt, horizon, 2, true)?;
    let setup_seconds = setup.elapsed().as_secs_f64();

    let start = Instant::now();
    let sigma = full.memory.lead();
    let sigma_half = edge.memory.lead();
    let mut lu = factor(grid, sigma, sigma_half)?;

    let xs = grid.xs();
    let mut u: Vec<f64> = xs.iter().map(|&x| (problem.initial)(x)).collect();
    observer(0, &u);
    full.memory.commit(&u)?;
    edge.memory.commit(&[u[0], u[n]])?;

    let mut hist = vec![0.0; n + 1];
    let mut hist_edge = [0.0; 2];
    let mut peak = full.memory.resident_scalars() + edge.memory.resident_scalars();
    for step in 1..=grid.n_time {
        let t = grid.t(step);
        full.memory.history_into(&mut hist)?;
        edge.memory.history_into(&mut hist_edge)?;
        for i in 0..=n {
            u[i] = (problem.source)(xs[i], t) - hist[i];
        }
        u[0] -= 2.0 / h * hist_edge[0];
        u[n] -= 2.0 / h * hist_edge[1];
        if cfg.reassemble_each_step {
            lu = factor(grid, sigma, sigma_half)?;
        }
        lu.solve_in_place(&mut u);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Internal(format!("non-finite solution at step {step}")));
        }
        observer(step, &u);
        full.memory.commit(&u)?;
        edge.memory.commit(&[u[0], u[n]])?;
        peak = peak.max(full.memory.resident_scalars() + edge.memory.resident_scalars());
    }

    let kernel_len = |k: &Option<Arc<crate::caputo::FastKernel>>| k.as_ref().map_or(0, |k| k.len());
    let kernel_cert =
        |k: &Option<Arc<crate::caputo::FastKernel>>| k.as_ref().map_or(0.0, |k| k.soe().certified_error());
    Ok(SolveStats {
        wall_seconds: start.elapsed().as_secs_f64(),
        setup_seconds,
        n_exp: kernel_len(&full.kernel),
        n_exp_half: kernel_len(&edge.kernel),
        peak_history_scalars: peak,
        certified_error: kernel_cert(&full.kernel),
        certified_error_half: kernel_cert(&edge.kernel),
    })
}

/// March the scheme and keep every level.
pub fn solve_linear(problem: &LinearProblem, grid: &GridSpec, cfg: &SolveConfig) -> Result<LinearSolution> {
    let mut levels = Vec::with_capacity(grid.n_time + 1);
    let stats = solve_linear_with(problem, grid, cfg, &mut |_, u| levels.push(u.to_vec()))?;
    Ok(LinearSolution {
        grid: *grid,
        levels,
        stats,
    })
}

/// March the scheme and return only `E(h, dt)` against the exact solution.
pub fn solve_linear_error(problem: &LinearProblem, grid: &GridSpec, cfg: &SolveConfig) -> Result<(f64, SolveStats)> {
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::Configuration("problem has no exact solution".into()))?;
    let xs = grid.xs();
    let mut sum = 0.0;
    let stats = solve_linear_with(problem, grid, cfg, &mut |k, u| {
        if k > 0 {
            let t = grid.t(k);
            let e = u
                .iter()
                .zip(&xs)
                .fold(0.0_f64, |m, (v, &x)| m.max((v - exact(x, t)).abs()));
            sum += e * e;
        }
    })?;
    Ok(((grid.dt * sum).sqrt(), stats))
}

/// Both sides of the prior estimate at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorEstimateTerms {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Result of [`prior_estimate_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimate {
    pub holds: bool,
    /// Largest `lhs / rhs` over all `n` (0 when every side vanishes).
    pub worst_ratio: f64,
    pub terms: Vec<PriorEstimateTerms>,
}

/// Evaluate the stability estimate
/// `dt sum_{k<=n} ||u^k||_inf^2 <= theta (rho ||u^0||^2 + varrho ((u_0^0)^2 + (u_N^0)^2)
///   + dt/(8 nu) sum_k ((h f_0^k)^2 + (h f_N^k)^2) + dt/mu sum_k h sum_i (f_i^k)^2)`
/// for every `n = 1..=N_T`. Pass `eps = 0` for a direct-scheme solution.
pub fn prior_estimate_check(
    levels: &[Vec<f64>],
    problem: &LinearProblem,
    grid: &GridSpec,
    eps: f64,
) -> Result<PriorEstimate> {
    if levels.len() != grid.n_time + 1 {
        return Err(Error::input("solution does not cover every time level"));
    }
    let h = grid.h();
    let l = grid.length();
    let ns = grid.n_space;
    let xs = grid.xs();
    let u0 = &levels[0];
    let u0_norm = l2_norm_sq(u0, h);
    let u0_edges = u0[0] * u0[0] + u0[ns] * u0[ns];
    let mut lhs = 0.0;
    let mut edge_src = 0.0;
    let mut inner_src = 0.0;
    let mut terms = Vec::with_capacity(grid.n_time);
    let mut holds = true;
    let mut worst = 0.0_f64;
    for k in 1..=grid.n_time {
        let t = grid.t(k);
        let m = max_norm(&levels[k]);
        lhs += grid.dt * m * m;
        let f0 = h * (problem.source)(xs[0], t);
        let fn_ = h * (problem.source)(xs[ns], t);
        edge_src += f0 * f0 + fn_ * fn_;
        inner_src += h * xs[1..ns].iter().map(|&x| (problem.source)(x, t).powi(2)).sum::<f64>();
        let c = StabilityConstants::new(grid.alpha, grid.dt, k, eps)?;
        let rhs = c.theta(l)
            * (c.rho * u0_norm + c.varrho * u0_edges + grid.dt / (8.0 * c.nu) * edge_src + grid.dt / c.mu * inner_src);
        if lhs > rhs {
            holds = false;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        } else if lhs > 0.0 {
            worst = f64::INFINITY;
        }
        terms.push(PriorEstimateTerms { n: k, lhs, rhs });
    }
    Ok(PriorEstimate {
        holds,
        worst_ratio: worst,
        terms,
    })
}

/// Both sides of the discrete Sobolev inequality
/// `||u||_inf^2 <= theta ||delta_x u||^2 + (1/theta + 1/L) ||u||^2`.
pub fn sobolev_sides(u: &[f64], h: f64, theta: f64) -> (f64, f64) {
    let l = h * (u.len() - 1) as f64;
    let m = max_norm(u);
    (
        m * m,
        theta * grad_norm_sq(u, h) + (1.0 / theta + 1.0 / l) * l2_norm_sq(u, h),
    )
}

/// History-scalar count of the fast variant: every node carries the order-`alpha`
/// kernel, the two boundary nodes also the order-`alpha/2` one.
pub fn fast_history_scalars(n_space: usize, n_exp: usize, n_exp_half: usize) -> usize {
    (n_space + 1) * n_exp + 2 * n_exp_half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_stays_zero() {
        let p = LinearProblem::homogeneous(0.5, 0.0, 1.0, 1.0, Arc::new(|_| 0.0));
        let g = p.grid(10, 8).unwrap();
        for cfg in [SolveConfig::direct(), SolveConfig::fast(1e-6)] {
            let s = solve_linear(&p, &g, &cfg).unwrap();
            assert!(s.levels.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn manufactured_data_consistent_at_zero() {
        let p = manufactured_problem(0.3);
        let exact = p.exact.clone().unwrap();
        for i in 0..=20 {
            let x = PI * i as f64 / 20.0;
            assert_eq!(exact(x, 0.0), (p.initial)(x));
        }
        assert_eq!(exact(0.0, 0.7), 0.0);
        assert!(exact(PI, 0.7).abs() < 1e-30);
        assert!((p.source)(0.0, 0.5).abs() < 1e-30 && (p.source)(PI, 0.5).abs() < 1e-12);
    }

    #[test]
    fn large_tolerance_is_configuration_error() {
        assert!(matches!(
            StabilityConstants::new(0.5, 0.01, 100, 10.0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn memory_counter_matches_formula() {
        let p = manufactured_problem(0.5);
        let g = p.grid(12, 16).unwrap();
        let s = solve_linear(&p, &g, &SolveConfig::fast(1e-6)).unwrap();
        assert_eq!(
            s.stats.peak_history_scalars,
            fast_history_scalars(12, s.stats.n_exp, s.stats.n_exp_half)
        );
    }
}
