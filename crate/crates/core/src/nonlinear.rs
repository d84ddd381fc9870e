//! Nonlinear time-fractional reaction-diffusion `D^alpha u = u_xx + f(u)`
//! with absorbing boundary rows, the reaction lagged by one step.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::banded::{BandedSystem, ThomasFactor};
use crate::error::{Error, Result};
use crate::grid::{max_norm, GridSpec};
use crate::scheme::{make_memory, SolveConfig, SolveStats};

/// Reaction term `f(u)`.
#[derive(Clone)]
pub enum ReactionKind {
    /// `f(u) = -u (1 - u)`
    Fisher,
    /// `f(u) = -0.1 u (1 - u) (u - 0.001)`
    Huxley,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ReactionKind {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ReactionKind::Fisher => -u * (1.0 - u),
            ReactionKind::Huxley => -0.1 * u * (1.0 - u) * (u - 0.001),
            ReactionKind::Custom(f) => f(u),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReactionKind::Fisher => "fisher",
            ReactionKind::Huxley => "huxley",
            ReactionKind::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for ReactionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReactionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fisher" => Ok(ReactionKind::Fisher),
            "huxley" => Ok(ReactionKind::Huxley),
            other => Err(Error::Configuration(format!("unknown reaction '{other}'"))),
        }
    }
}

/// Time level at which the left absorbing row is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryReading {
    /// Both rows at the new level `n`.
    #[default]
    Symmetric,
    /// Left row at level `n - 1` as printed; it then contains no unknown of
    /// level `n`, so assembly reports a singular system.
    Literal,
}

/// Parameters of the absorbing boundary rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcParams {
    /// Expansion point entering as `s0^(alpha/2)`, `s0^alpha`, `s0^(3 alpha/2)`.
    pub s0: f64,
    pub reading: BoundaryReading,
}

impl Default for AbcParams {
    fn default() -> Self {
        Self {
            s0: 1.0,
            reading: BoundaryReading::Symmetric,
        }
    }
}

impl AbcParams {
    pub fn with_s0(s0: f64) -> Self {
        Self { s0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s0 > 0.0 && self.s0.is_finite() {
            Ok(())
        } else {
            Err(Error::input(format!("s0 must be positive and finite, got {}", self.s0)))
        }
    }
}

/// `exp(-10 (x - 1/2)^2) + exp(-10 (x + 1/2)^2)`.
pub fn double_gaussian(x: f64) -> f64 {
    (-10.0 * (x - 0.5).powi(2)).exp() + (-10.0 * (x + 0.5).powi(2)).exp()
}

struct BoundaryCoeffs {
    // coefficient of the outer and second-inner node (same magnitude)
    outer: f64,
    // coefficient of the adjacent node
    inner: f64,
    s_half: f64,
}

fn boundary_coeffs(alpha: f64, s0: f64, sigma: f64, h: f64) -> BoundaryCoeffs {
    let s_half = s0.powf(0.5 * alpha);
    let s_one = s0.powf(alpha);
    let s_three = s0.powf(1.5 * alpha);
    BoundaryCoeffs {
        outer: (sigma + 3.0 * s_one) / (2.0 * h),
        inner: 3.0 * s_half * sigma + s_three,
        s_half,
    }
}

/// Step matrix over nodes `0..=M`; rows 0 and `M` are the absorbing rows.
pub fn assemble_step_matrix(grid: &GridSpec, abc: &AbcParams, sigma: f64) -> Result<BandedSystem> {
    abc.validate()?;
    if abc.reading == BoundaryReading::Literal {
        return Err(Error::Assembly(
            "left boundary row at level n-1 has no unknowns of level n; the system is singular".into(),
        ));
    }
    let m = grid.n_space;
    let h = grid.h();
    let ih2 = 1.0 / (h * h);
    let c = boundary_coeffs(grid.alpha, abc.s0, sigma, h);
    let mut a = BandedSystem::new(m + 1)?;
    // (d~ - 3 s^(a/2)) D U_1 + (3 s^a d~ - s^(3a/2)) U_1
    a.set_row(0, 0.0, -c.outer, -c.inner);
    a.set_first_extra(c.outer);
    for i in 1..m {
        a.set_row(i, -ih2, sigma + 2.0 * ih2, -ih2);
    }
    // (d~ + 3 s^(a/2)) D U_{M-1} + (3 s^a d~ + s^(3a/2)) U_{M-1}
    a.set_row(m, c.inner, c.outer, 0.0);
    a.set_last_extra(-c.outer);
    Ok(a)
}

fn factor(grid: &GridSpec, abc: &AbcParams, sigma: f64) -> Result<ThomasFactor> {
    assemble_step_matrix(grid, abc, sigma)?.factor()
}

/// March the scheme from `initial`, handing every level to `observer`.
pub fn solve_nonlinear_with(
    reaction: &ReactionKind,
    initial: &dyn Fn(f64) -> f64,
    grid: &GridSpec,
    abc: &AbcParams,
    cfg: &SolveConfig,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> Result<SolveStats> {
    grid.validate()?;
    abc.validate()?;
    let m = grid.n_space;
    let h = grid.h();
    let setup = Instant::now();
    let mut mem = make_memory(cfg, grid.alpha, grid.dt, grid.horizon(), m + 1, false)?;
    let setup_seconds = setup.elapsed().as_secs_f64();

    let start = Instant::now();
    let sigma = mem.memory.lead();
    let mut lu = factor(grid, abc, sigma)?;
    let c = boundary_coeffs(grid.alpha, abc.s0, sigma, h);
    let s3 = 3.0 * c.s_half;
    let inv2h = 0.5 / h;

    let mut u: Vec<f64> = grid.xs().iter().map(|&x| initial(x)).collect();
    observer(0, &u);
    mem.memory.commit(&u)?;
    let mut react = vec![0.0; m + 1];
    let mut hist = vec![0.0; m + 1];
    let mut peak = mem.memory.resident_scalars();
    for step in 1..=grid.n_time {
        for (r, v) in react.iter_mut().zip(&u) {
            *r = reaction.eval(*v);
        }
        mem.memory.history_into(&mut hist)?;
        for i in 1..m {
            u[i] = react[i] - hist[i];
        }
        u[0] = (react[2] - react[0]) * inv2h - s3 * react[1] - (hist[2] - hist[0]) * inv2h + s3 * hist[1];
        u[m] =
            (react[m] - react[m - 2]) * inv2h + s3 * react[m - 1] - (hist[m] - hist[m - 2]) * inv2h - s3 * hist[m - 1];
        if cfg.reassemble_each_step {
            lu = factor(grid, abc, sigma)?;
        }
        lu.solve_in_place(&mut u);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Internal(format!("non-finite solution at step {step}")));
        }
        observer(step, &u);
        mem.memory.commit(&u)?;
        peak = peak.max(mem.memory.resident_scalars());
    }
    Ok(SolveStats {
        wall_seconds: start.elapsed().as_secs_f64(),
        setup_seconds,
        n_exp: mem.kernel.as_ref().map_or(0, |k| k.len()),
        n_exp_half: 0,
        peak_history_scalars: peak,
        certified_error: mem.kernel.as_ref().map_or(0.0, |k| k.soe().certified_error()),
        certified_error_half: 0.0,
    })
}

/// Final level of a run together with its statistics.
#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    pub grid: GridSpec,
    pub final_level: Vec<f64>,
    pub stats: SolveStats,
}

/// March from the double-Gaussian initial value and keep the last level.
pub fn solve_nonlinear(
    reaction: &ReactionKind,
    grid: &GridSpec,
    abc: &AbcParams,
    cfg: &SolveConfig,
) -> Result<NonlinearSolution> {
    let mut last = Vec::new();
    let stats = solve_nonlinear_with(reaction, &double_gaussian, grid, abc, cfg, &mut |k, u| {
        if k == grid.n_time {
            last = u.to_vec();
        }
    })?;
    Ok(NonlinearSolution {
        grid: *grid,
        final_level: last,
        stats,
    })
}

/// Which resolution a self-convergence ladder refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "time" => Ok(Axis::Time),
            "space" => Ok(Axis::Space),
            other => Err(Error::Configuration(format!("unknown axis '{other}'"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Time => "time",
            Axis::Space => "space",
        })
    }
}

/// A self-convergence study: ladder runs on `window`, one reference run on `reference_window`.
#[derive(Debug, Clone)]
pub struct SelfConvergenceSpec {
    pub alpha: f64,
    pub horizon: f64,
    pub window: (f64, f64),
    pub reference_window: (f64, f64),
    pub axis: Axis,
    /// Step sizes being refined (`dt` for the time axis, `h` for space).
    pub ladder: Vec<f64>,
    /// The step held fixed on the ladder (`h` for time, `dt` for space).
    pub fixed: f64,
    /// Reference `(h, dt)`.
    pub reference: (f64, f64),
}

impl SelfConvergenceSpec {
    /// Window `[-6, 6]` and horizon 1. Time ladders take their reference on
    /// `[-12, 12]`; space ladders on the window itself, so that the truncation
    /// error of the boundary condition (independent of `h`) cancels.
    pub fn standard(alpha: f64, axis: Axis, ladder: Vec<f64>, fixed: f64, reference: (f64, f64)) -> Self {
        let window = (-6.0, 6.0);
        Self {
            alpha,
            horizon: 1.0,
            window,
            reference_window: match axis {
                Axis::Time => (-12.0, 12.0),
                Axis::Space => window,
            },
            axis,
            ladder,
            fixed,
            reference,
        }
    }
}

/// One ladder rung.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub h: f64,
    pub dt: f64,
    /// `max_i |U_i - U_ref(x_i)|` on the window at the final time.
    pub error: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfConvergence {
    pub rows: Vec<LadderRow>,
    pub rates: Vec<f64>,
    pub reference_stats: SolveStats,
}

fn count_steps(length: f64, step: f64, what: &str) -> Result<usize> {
    let n = (length / step).round();
    if n < 1.0 || ((n * step - length).abs() > 1e-9 * length) {
        return Err(Error::Configuration(format!(
            "{what} {step} does not divide the interval length {length}"
        )));
    }
    Ok(n as usize)
}

/// The reference run of a self-convergence study.
pub fn reference_solution(
    reaction: &ReactionKind,
    abc: &AbcParams,
    reference_cfg: &SolveConfig,
    spec: &SelfConvergenceSpec,
) -> Result<NonlinearSolution> {
    let (rl, rr) = spec.reference_window;
    let (wl, wr) = spec.window;
    if !(rl <= wl && wr <= rr) {
        return Err(Error::Configuration(
            "the window must lie inside the reference window".into(),
        ));
    }
    let (h_ref, dt_ref) = spec.reference;
    let grid = GridSpec {
        x_left: rl,
        x_right: rr,
        n_space: count_steps(rr - rl, h_ref, "reference h")?,
        dt: dt_ref,
        n_time: count_steps(spec.horizon, dt_ref, "reference dt")?,
        alpha: spec.alpha,
    };
    solve_nonlinear(reaction, &grid, abc, reference_cfg)
}

/// Ladder runs measured against an existing reference run.
pub fn ladder_against(
    reaction: &ReactionKind,
    abc: &AbcParams,
    cfg: &SolveConfig,
    spec: &SelfConvergenceSpec,
    reference: &NonlinearSolution,
) -> Result<SelfConvergence> {
    let (wl, wr) = spec.window;
    let h_ref = reference.grid.h();
    let offset = if wl == reference.grid.x_left {
        0
    } else {
        count_steps(wl - reference.grid.x_left, h_ref, "window offset")?
    };
    let mut rows = Vec::with_capacity(spec.ladder.len());
    for &step in &spec.ladder {
        let (h, dt) = match spec.axis {
            Axis::Time => (spec.fixed, step),
            Axis::Space => (step, spec.fixed),
        };
        let grid = GridSpec {
            x_left: wl,
            x_right: wr,
            n_space: count_steps(wr - wl, h, "h")?,
            dt,
            n_time: count_steps(spec.horizon, dt, "dt")?,
            alpha: spec.alpha,
        };
        let stride = count_steps(h, h_ref, "ladder h over reference h")?;
        let run = solve_nonlinear(reaction, &grid, abc, cfg)?;
        let diff: Vec<f64> = run
            .final_level
            .iter()
            .enumerate()
            .map(|(i, v)| v - reference.final_level[offset + i * stride])
            .collect();
        rows.push(LadderRow {
            h,
            dt,
            error: max_norm(&diff),
            stats: run.stats,
        });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(SelfConvergence {
        rates: crate::grid::rates(&errors),
        rows,
        reference_stats: reference.stats.clone(),
    })
}

/// Run the reference, then every ladder rung, and compare final levels on the window.
pub fn self_convergence(
    reaction: &ReactionKind,
    abc: &AbcParams,
    cfg: &SolveConfig,
    reference_cfg: &SolveConfig,
    spec: &SelfConvergenceSpec,
) -> Result<SelfConvergence> {
    let reference = reference_solution(reaction, abc, reference_cfg, spec)?;
    ladder_against(reaction, abc, cfg, spec, &reference)
}
