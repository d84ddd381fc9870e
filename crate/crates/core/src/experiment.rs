//! Table and scaling sweeps driven by a flat configuration.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::grid::Variant;
use crate::linear::{manufactured_problem, solve_linear_error, solve_linear_with};
use crate::nonlinear::{
    double_gaussian, ladder_against, reference_solution, solve_nonlinear_with, AbcParams, Axis, ReactionKind,
    SelfConvergenceSpec,
};
use crate::report::{
    loglog_fit, ConvergenceReport, RateAxis, ReportMeta, ReportRow, ScalingPoint, ScalingReport, SlopeFit,
    SoeCountReport, SoeCountRow, TableReport, VERSION,
};
use crate::scheme::{KernelSource, SolveConfig, SolveStats};
use crate::soe::{build_soe, SumOfExponentials};
use crate::GridSpec;

/// What a table or sweep computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Linear,
    Fisher,
    Huxley,
    SoeCount,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Linear => "linear",
            ExperimentKind::Fisher => "fisher",
            ExperimentKind::Huxley => "huxley",
            ExperimentKind::SoeCount => "soe-count",
        }
    }

    fn reaction(&self) -> Option<ReactionKind> {
        match self {
            ExperimentKind::Fisher => Some(ReactionKind::Fisher),
            ExperimentKind::Huxley => Some(ReactionKind::Huxley),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "linear" => Ok(ExperimentKind::Linear),
            "fisher" => Ok(ExperimentKind::Fisher),
            "huxley" => Ok(ExperimentKind::Huxley),
            "soe-count" | "soe" => Ok(ExperimentKind::SoeCount),
            other => Err(Error::Configuration(format!("unknown experiment kind '{other}'"))),
        }
    }
}

/// A fully resolved table configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub kind: ExperimentKind,
    pub axis: Axis,
    pub alphas: Vec<f64>,
    pub variants: Vec<Variant>,
    pub eps: f64,
    /// Steps of the refined axis, coarse to fine.
    pub ladder: Vec<f64>,
    /// Step of the other axis.
    pub fixed: f64,
    pub s0: f64,
    /// Reference `(h, dt)` of the nonlinear self-convergence runs.
    pub reference: (f64, f64),
    pub reference_variant: Variant,
    /// Tolerances, horizons and smallest time of the exponential-count table.
    pub eps_list: Vec<f64>,
    pub horizons: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    pub workers: usize,
}

fn halving(first: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| first / (1u64 << k) as f64).collect()
}

impl TableSpec {
    /// Desk-scale defaults for `kind` and `axis`.
    pub fn defaults(kind: ExperimentKind, axis: Axis) -> Self {
        let (ladder, fixed, eps, reference) = match (kind, axis) {
            (ExperimentKind::Linear, Axis::Time) => (halving(0.1, 5), PI / 2000.0, 1e-7, (0.0, 0.0)),
            (ExperimentKind::Linear, Axis::Space) => (halving(PI / 10.0, 5), 1.0 / 4000.0, 1e-7, (0.0, 0.0)),
            (_, Axis::Time) => (halving(0.1, 4), 1.0 / 256.0, 1e-9, (1.0 / 256.0, 1.0 / 2048.0)),
            (_, Axis::Space) => (halving(1.0 / 80.0, 4), 1.0 / 256.0, 1e-9, (1.0 / 2560.0, 1.0 / 256.0)),
        };
        Self {
            kind,
            axis,
            alphas: vec![0.2, 0.5],
            variants: vec![Variant::Fast],
            eps,
            ladder,
            fixed,
            s0: 1.0,
            reference,
            reference_variant: Variant::Fast,
            eps_list: vec![1e-3, 1e-6, 1e-9],
            horizons: vec![1.0, 10.0],
            delta: 1e-3,
            seed: 0,
            workers: 1,
        }
    }

    /// Read `kind` (required) and override defaults with any other recognised key.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "kind",
            "axis",
            "alphas",
            "variants",
            "eps",
            "ladder",
            "fixed",
            "s0",
            "reference_h",
            "reference_dt",
            "reference_variant",
            "eps_list",
            "horizons",
            "delta",
            "seed",
            "workers",
        ];
        if let Some(k) = cfg.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::Configuration(format!("unknown key `{k}`")));
        }
        let kind: ExperimentKind = cfg.require("kind")?.parse()?;
        let axis: Axis = cfg.parsed("axis")?.unwrap_or(Axis::Time);
        let mut spec = Self::defaults(kind, axis);
        if cfg.get("alphas").is_some() {
            spec.alphas = cfg.numbers("alphas")?;
        }
        if cfg.get("variants").is_some() {
            spec.variants = cfg.parsed_list("variants")?;
        }
        if let Some(v) = cfg.number("eps")? {
            spec.eps = v;
        }
        if cfg.get("ladder").is_some() {
            spec.ladder = cfg.numbers("ladder")?;
        }
        spec.fixed = cfg.number_or("fixed", spec.fixed)?;
        spec.s0 = cfg.number_or("s0", spec.s0)?;
        // Unless given, the reference shares the fixed step and refines the
        // laddered one four times beyond its finest rung.
        let finest = spec.ladder.last().copied().unwrap_or(spec.fixed);
        let (h_default, dt_default) = match axis {
            Axis::Time => (spec.fixed, spec.reference.1.min(finest / 4.0)),
            Axis::Space => (finest / 4.0, spec.fixed),
        };
        spec.reference.0 = cfg.number_or("reference_h", h_default)?;
        spec.reference.1 = cfg.number_or("reference_dt", dt_default)?;
        if let Some(v) = cfg.parsed("reference_variant")? {
            spec.reference_variant = v;
        }
        if cfg.get("eps_list").is_some() {
            spec.eps_list = cfg.numbers("eps_list")?;
        }
        if cfg.get("horizons").is_some() {
            spec.horizons = cfg.numbers("horizons")?;
        }
        spec.delta = cfg.number_or("delta", spec.delta)?;
        spec.seed = cfg.integer_or("seed", spec.seed)?;
        spec.workers = cfg.integer_or("workers", spec.workers as u64)?.max(1) as usize;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Configuration("every alpha must lie in (0, 1)".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Configuration("no variants selected".into()));
        }
        if self.kind == ExperimentKind::SoeCount {
            if !self.eps_list.iter().chain(&self.horizons).all(|&v| positive(v)) || !positive(self.delta) {
                return Err(Error::Configuration(
                    "tolerances, horizons and delta must be positive".into(),
                ));
            }
            return Ok(());
        }
        if !positive(self.eps) || !positive(self.fixed) || !self.ladder.iter().all(|&v| positive(v)) {
            return Err(Error::Configuration(
                "eps, fixed and ladder steps must be positive".into(),
            ));
        }
        if self.ladder.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::Configuration("ladder steps must decrease".into()));
        }
        Ok(())
    }

    fn meta(&self, certified_error: f64) -> ReportMeta {
        let nonlinear = self.kind.reaction().is_some();
        ReportMeta {
            kind: self.kind.to_string(),
            axis: (self.kind != ExperimentKind::SoeCount).then(|| self.axis.to_string()),
            eps: if self.kind == ExperimentKind::SoeCount {
                0.0
            } else {
                self.eps
            },
            certified_error,
            s0: nonlinear.then_some(self.s0),
            seed: self.seed,
            version: VERSION.to_string(),
            error_norm: match self.kind {
                ExperimentKind::Linear => "sqrt(dt sum_k max_i |e_i^k|^2)".into(),
                ExperimentKind::SoeCount => "max_t |t^-beta - soe(t)|".into(),
                _ => "max_i |e_i| at final time".into(),
            },
            reference: nonlinear.then_some(self.reference),
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Configuration(format!("cannot start {workers} workers: {e}")))
}

fn row(
    kind: ExperimentKind,
    alpha: f64,
    variant: Variant,
    h: f64,
    dt: f64,
    error: f64,
    stats: &SolveStats,
) -> ReportRow {
    ReportRow {
        experiment: kind.to_string(),
        alpha,
        variant: variant.to_string(),
        h,
        dt,
        error,
        rate: None,
        wall_seconds: stats.wall_seconds,
        setup_seconds: stats.setup_seconds,
        n_exp: stats.n_exp,
        n_exp_half: stats.n_exp_half,
        peak_history_floats: stats.peak_history_scalars,
        certified_error: stats.certified_error.max(stats.certified_error_half),
    }
}

fn steps(length: f64, step: f64) -> usize {
    (length / step).round().max(1.0) as usize
}

fn linear_cell(alpha: f64, variant: Variant, h: f64, dt: f64, eps: f64) -> Result<ReportRow> {
    let problem = manufactured_problem(alpha);
    let grid = problem.grid(steps(problem.x_right - problem.x_left, h), steps(problem.horizon, dt))?;
    let cfg = SolveConfig::fast(eps).with_variant(variant);
    let (e, stats) = solve_linear_error(&problem, &grid, &cfg)?;
    Ok(row(
        ExperimentKind::Linear,
        alpha,
        variant,
        grid.h(),
        grid.dt,
        e,
        &stats,
    ))
}

/// Run every cell of a table; series order is alpha, then variant, then ladder.
pub fn run_table(spec: &TableSpec) -> Result<TableReport> {
    spec.validate()?;
    let pool = pool(spec.workers)?;
    match spec.kind {
        ExperimentKind::SoeCount => pool.install(|| soe_count_table(spec)).map(TableReport::SoeCount),
        ExperimentKind::Linear => {
            let cells: Vec<(f64, Variant, f64)> = spec
                .alphas
                .iter()
                .flat_map(|&a| {
                    spec.variants
                        .iter()
                        .flat_map(move |&v| spec.ladder.iter().map(move |&s| (a, v, s)))
                })
                .collect();
            let rows = pool.install(|| {
                cells
                    .par_iter()
                    .map(|&(alpha, variant, step)| {
                        let (h, dt) = match spec.axis {
                            Axis::Time => (spec.fixed, step),
                            Axis::Space => (step, spec.fixed),
                        };
                        linear_cell(alpha, variant, h, dt, spec.eps)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(TableReport::Convergence(finish(spec, rows)))
        }
        ExperimentKind::Fisher | ExperimentKind::Huxley => {
            let reaction = spec.kind.reaction().expect("nonlinear kind");
            let abc = AbcParams::with_s0(spec.s0);
            let series = pool.install(|| {
                spec.alphas
                    .par_iter()
                    .map(|&alpha| nonlinear_series(spec, &reaction, &abc, alpha))
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(TableReport::Convergence(finish(
                spec,
                series.into_iter().flatten().collect(),
            )))
        }
    }
}

fn finish(spec: &TableSpec, rows: Vec<ReportRow>) -> ConvergenceReport {
    let cert = rows.iter().map(|r| r.certified_error).fold(0.0, f64::max);
    let mut report = ConvergenceReport {
        meta: spec.meta(cert),
        rows,
    };
    report.fill_rates(match spec.axis {
        Axis::Time => RateAxis::Time,
        Axis::Space => RateAxis::Space,
    });
    report
}

fn nonlinear_series(spec: &TableSpec, reaction: &ReactionKind, abc: &AbcParams, alpha: f64) -> Result<Vec<ReportRow>> {
    if spec.ladder.is_empty() {
        return Ok(Vec::new());
    }
    let sc = SelfConvergenceSpec::standard(alpha, spec.axis, spec.ladder.clone(), spec.fixed, spec.reference);
    let reference_cfg = SolveConfig::fast(spec.eps).with_variant(spec.reference_variant);
    let reference = reference_solution(reaction, abc, &reference_cfg, &sc)?;
    let mut rows = Vec::new();
    for &variant in &spec.variants {
        let cfg = SolveConfig::fast(spec.eps).with_variant(variant);
        let study = ladder_against(reaction, abc, &cfg, &sc, &reference)?;
        rows.extend(
            study
                .rows
                .iter()
                .map(|r| row(spec.kind, alpha, variant, r.h, r.dt, r.error, &r.stats)),
        );
    }
    Ok(rows)
}

fn soe_count_table(spec: &TableSpec) -> Result<SoeCountReport> {
    let cells: Vec<(f64, f64, f64)> = spec
        .alphas
        .iter()
        .flat_map(|&a| {
            spec.eps_list
                .iter()
                .flat_map(move |&e| spec.horizons.iter().map(move |&t| (a, e, t)))
        })
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(alpha, eps, horizon)| {
            let start = Instant::now();
            let raw = build_soe(1.0 + alpha, spec.delta, horizon, eps)?;
            let reduced = raw.reduce(eps);
            Ok(SoeCountRow {
                alpha,
                eps,
                delta: spec.delta,
                horizon,
                n_exp_raw: raw.len(),
                n_exp: reduced.len(),
                certified_error: reduced.certified_error(),
                build_seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cert = rows.iter().map(|r| r.certified_error).fold(0.0, f64::max);
    Ok(SoeCountReport {
        meta: spec.meta(cert),
        rows,
    })
}

/// Parse a configuration and run its table.
pub fn run_table_config(cfg: &Config) -> Result<TableReport> {
    run_table(&TableSpec::from_config(cfg)?)
}

/// A CPU-time sweep over the number of time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSpec {
    pub kind: ExperimentKind,
    pub alpha: f64,
    pub n_space: usize,
    pub nt_ladder: Vec<usize>,
    pub variants: Vec<Variant>,
    pub eps: f64,
    pub s0: f64,
    /// Add the kernel construction time to the fast variant's wall time.
    pub include_setup: bool,
    /// Each cell reports its fastest run. Cells are revisited in rounds until each has run `repeats`
    /// times and used `min_seconds`, but a cell that has used a second is not run again.
    pub repeats: usize,
    pub min_seconds: f64,
    pub seed: u64,
}

impl ScalingSpec {
    /// `N_S = 30`, `alpha = 0.5`, `N_T = 2^10 .. 2^15`, both variants.
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            kind,
            alpha: 0.5,
            n_space: 30,
            nt_ladder: (10..=15).map(|k| 1usize << k).collect(),
            variants: vec![Variant::Fast, Variant::Direct],
            eps: if kind == ExperimentKind::Linear { 1e-7 } else { 1e-9 },
            s0: 1.0,
            include_setup: false,
            repeats: 3,
            min_seconds: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(
            self.kind,
            ExperimentKind::Linear | ExperimentKind::Fisher | ExperimentKind::Huxley
        ) {
            return Err(Error::Configuration(format!(
                "scaling does not support '{}'",
                self.kind
            )));
        }
        if self.nt_ladder.len() < 5 {
            return Err(Error::Configuration(format!(
                "the N_T ladder needs at least 5 points, got {}",
                self.nt_ladder.len()
            )));
        }
        if self.nt_ladder.windows(2).any(|p| p[1] != 2 * p[0]) || self.nt_ladder[0] == 0 {
            return Err(Error::Configuration("the N_T ladder must double at every step".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Configuration("no variants selected".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Configuration("repeats must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.n_space < 2 || !(self.eps > 0.0) {
            return Err(Error::Configuration(
                "need alpha in (0, 1), n_space >= 2 and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Expansions certified down to `dt_min` that every run of a sweep can share.
pub fn shared_kernels(alpha: f64, dt_min: f64, horizon: f64, eps: f64, with_half: bool) -> Result<(KernelSource, f64)> {
    let start = Instant::now();
    let make = |a: f64| -> Result<Arc<SumOfExponentials>> {
        Ok(Arc::new(build_soe(1.0 + a, dt_min, horizon.max(1.0), eps)?.reduce(eps)))
    };
    let main = make(alpha)?;
    let half = if with_half { Some(make(0.5 * alpha)?) } else { None };
    Ok((
        KernelSource::Shared { alpha: main, half },
        start.elapsed().as_secs_f64(),
    ))
}

fn scaling_run(spec: &ScalingSpec, cfg: &SolveConfig, n_time: usize) -> Result<SolveStats> {
    match spec.kind {
        ExperimentKind::Linear => {
            let problem = manufactured_problem(spec.alpha);
            let grid = problem.grid(spec.n_space, n_time)?;
            solve_linear_with(&problem, &grid, cfg, &mut |_, _| {})
        }
        _ => {
            let reaction = spec.kind.reaction().expect("nonlinear kind");
            let grid = GridSpec::new(-6.0, 6.0, spec.n_space, 1.0, n_time, spec.alpha)?;
            let abc = AbcParams::with_s0(spec.s0);
            solve_nonlinear_with(&reaction, &double_gaussian, &grid, &abc, cfg, &mut |_, _| {})
        }
    }
}

/// Time every `(variant, N_T)` cell sequentially and fit log-log slopes.
pub fn run_scaling(spec: &ScalingSpec) -> Result<ScalingReport> {
    spec.validate()?;
    let n_max = *spec.nt_ladder.last().expect("validated ladder");
    let with_half = spec.kind == ExperimentKind::Linear;
    let (kernels, setup) = shared_kernels(spec.alpha, 1.0 / n_max as f64, 1.0, spec.eps, with_half)?;
    let mut points = Vec::new();
    let mut slopes = Vec::new();
    let mut cert: f64 = 0.0;
    for &variant in &spec.variants {
        let cfg = SolveConfig::fast(spec.eps)
            .with_variant(variant)
            .with_kernels(kernels.clone());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        // rounds sweep the whole ladder so a slow spell on a busy host hits every size alike
        let mut best: Vec<Option<SolveStats>> = vec![None; spec.nt_ladder.len()];
        let mut spent = vec![0.0; spec.nt_ladder.len()];
        let mut runs = vec![0usize; spec.nt_ladder.len()];
        loop {
            let mut ran = false;
            for (k, &n_time) in spec.nt_ladder.iter().enumerate() {
                let wanted = runs[k] < spec.repeats || spent[k] < spec.min_seconds;
                if runs[k] > 0 && (spent[k] >= 1.0 || !wanted) {
                    continue;
                }
                let stats = scaling_run(spec, &cfg, n_time)?;
                spent[k] += stats.wall_seconds;
                runs[k] += 1;
                ran = true;
                if best[k].as_ref().map_or(true, |b| stats.wall_seconds < b.wall_seconds) {
                    best[k] = Some(stats);
                }
            }
            if !ran {
                break;
            }
        }
        for (&n_time, stats) in spec.nt_ladder.iter().zip(best) {
            let stats = stats.expect("every cell runs at least once");
            let setup_seconds = if variant == Variant::Fast { setup } else { 0.0 };
            let wall = stats.wall_seconds + if spec.include_setup { setup_seconds } else { 0.0 };
            cert = cert.max(stats.certified_error).max(stats.certified_error_half);
            xs.push(n_time as f64);
            ys.push(wall);
            points.push(ScalingPoint {
                variant: variant.to_string(),
                n_time,
                wall_seconds: wall,
                setup_seconds,
                n_exp: stats.n_exp,
                peak_history_floats: stats.peak_history_scalars,
            });
        }
        let (slope, intercept) = loglog_fit(&xs, &ys).expect("at least five points");
        slopes.push(SlopeFit {
            variant: variant.to_string(),
            slope,
            intercept,
        });
    }
    Ok(ScalingReport {
        meta: ReportMeta {
            kind: spec.kind.to_string(),
            axis: None,
            eps: spec.eps,
            certified_error: cert,
            s0: (spec.kind != ExperimentKind::Linear).then_some(spec.s0),
            seed: spec.seed,
            version: VERSION.to_string(),
            error_norm: "none".into(),
            reference: None,
        },
        n_space: spec.n_space,
        alpha: spec.alpha,
        points,
        slopes,
    })
}
