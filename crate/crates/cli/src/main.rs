use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use fastcaputo::caputo::{direct_caputo_series, fast_caputo_series, FastKernel};
use fastcaputo::config::Config;
use fastcaputo::experiment::{run_scaling, run_table_config, ExperimentKind, ScalingSpec};
use fastcaputo::linear::{manufactured_problem, solve_linear_with};
use fastcaputo::nonlinear::{double_gaussian, solve_nonlinear_with, AbcParams, Axis, ReactionKind};
use fastcaputo::quadrature::{gauss_jacobi_power, gauss_legendre};
use fastcaputo::selftest::run_selftest;
use fastcaputo::soe::{build_soe, SumOfExponentials, DEFAULT_CERT_SAMPLES};
use fastcaputo::special::gamma;
use fastcaputo::{Error, GridSpec, SolveConfig, Variant};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fastcaputo",
    version,
    about = "Fast Caputo derivatives and time-fractional diffusion solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or re-check a sum-of-exponentials kernel.
    #[command(subcommand)]
    Soe(SoeCommand),
    /// Print a Gauss rule as CSV.
    #[command(subcommand)]
    Quadrature(QuadratureCommand),
    /// Evaluate Caputo derivatives of a sampled test function.
    #[command(subcommand)]
    Caputo(CaputoCommand),
    /// Run one solver and print its summary as JSON.
    Solve(SolveArgs),
    /// Run a convergence or exponential-count table.
    Convergence(ConvergenceArgs),
    /// Time a sweep over the number of time steps and fit log-log slopes.
    Scaling(ScalingArgs),
    /// Run the built-in checks.
    Selftest,
}

#[derive(Subcommand)]
enum SoeCommand {
    Build(SoeBuildArgs),
    Check(SoeCheckArgs),
}

#[derive(Args)]
struct SoeBuildArgs {
    /// Caputo order; the kernel is t^-(1+alpha).
    #[arg(long, conflicts_with = "beta")]
    alpha: Option<f64>,
    /// Kernel exponent in (1, 2).
    #[arg(long)]
    beta: Option<f64>,
    /// Smallest certified time, usually the time step.
    #[arg(long, visible_alias = "dt", default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Run the certified reduction after construction.
    #[arg(long)]
    reduce: bool,
    /// Write the expansion as JSON here instead of stdout.
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SoeCheckArgs {
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CERT_SAMPLES)]
    samples: usize,
    /// Tolerance to check against; defaults to the stored one.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Subcommand)]
enum QuadratureCommand {
    /// n-point Gauss-Legendre rule on [a, b].
    Legendre {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        b: f64,
    },
    /// n-point rule for the weight s^gamma on [0, a].
    Jacobi {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
    },
}

#[derive(Clone, Debug)]
enum TestFunction {
    One,
    T,
    T2,
    Sin,
    Exp,
    /// One sample per line (or the last column of a CSV line), starting at t = 0.
    Csv(PathBuf),
}

impl FromStr for TestFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "one" => Ok(TestFunction::One),
            "t" => Ok(TestFunction::T),
            "t2" => Ok(TestFunction::T2),
            "sin" => Ok(TestFunction::Sin),
            "exp" => Ok(TestFunction::Exp),
            other => match other.strip_prefix("csv:") {
                Some(path) if !path.is_empty() => Ok(TestFunction::Csv(PathBuf::from(path))),
                _ => Err(format!("expected one|t|t2|sin|exp|csv:FILE, got '{other}'")),
            },
        }
    }
}

impl TestFunction {
    fn samples(&self, n: usize, dt: f64) -> anyhow::Result<Vec<f64>> {
        let f = match self {
            TestFunction::One => |_: f64| 1.0,
            TestFunction::T => |t: f64| t,
            TestFunction::T2 => |t: f64| t * t,
            TestFunction::Sin => f64::sin,
            TestFunction::Exp => f64::exp,
            TestFunction::Csv(path) => return read_samples(path, n),
        };
        Ok((0..=n).map(|k| f(k as f64 * dt)).collect())
    }

    /// Closed-form Caputo derivative where one is elementary.
    fn exact(&self, t: f64, alpha: f64) -> Option<f64> {
        match self {
            TestFunction::One => Some(0.0),
            TestFunction::T => Some(t.powf(1.0 - alpha) / gamma(2.0 - alpha)),
            TestFunction::T2 => Some(2.0 * t.powf(2.0 - alpha) / gamma(3.0 - alpha)),
            _ => None,
        }
    }
}

fn read_samples(path: &PathBuf, n: usize) -> anyhow::Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
    let values: Vec<f64> = text
        .lines()
        .filter_map(|l| l.split(',').last().map(str::trim))
        .filter(|v| !v.is_empty())
        .filter_map(|v| v.parse().ok())
        .collect();
    if values.len() < n + 1 {
        return Err(Error::Configuration(format!(
            "{} holds {} samples, need {}",
            path.display(),
            values.len(),
            n + 1
        ))
        .into());
    }
    Ok(values[..=n].to_vec())
}

#[derive(Subcommand)]
enum CaputoCommand {
    /// Print `step,t,value[,exact]` for steps 1..=n.
    Eval {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        dt: f64,
        /// Number of steps.
        #[arg(long, visible_alias = "steps")]
        n: usize,
        /// one, t, t2, sin, exp or csv:FILE.
        #[arg(long = "fn", default_value = "sin")]
        function: TestFunction,
        /// Use the fast evaluator (the default).
        #[arg(long, conflicts_with = "direct")]
        fast: bool,
        /// Use the direct L1 sum.
        #[arg(long)]
        direct: bool,
        #[arg(long, default_value_t = 1e-9)]
        eps: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveKind {
    Linear,
    Fisher,
    Huxley,
}

#[derive(Args)]
struct SolveArgs {
    kind: SolveKind,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Number of spatial intervals.
    #[arg(long, default_value_t = 100)]
    ns: usize,
    /// Number of time steps.
    #[arg(long, default_value_t = 100)]
    nt: usize,
    #[arg(long, default_value = "fast")]
    variant: Variant,
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
    /// Boundary parameter of the nonlinear problems.
    #[arg(long, default_value_t = 1.0)]
    s0: f64,
    /// Write the final profile as `x,u` CSV.
    #[arg(long, visible_alias = "dump-solution")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Experiment kind; may instead come from the configuration file.
    kind: Option<String>,
    #[arg(long)]
    axis: Option<Axis>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated variants.
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    stem: String,
}

#[derive(Args)]
struct ScalingArgs {
    kind: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 30)]
    ns: usize,
    /// Smallest N_T of the doubling ladder.
    #[arg(long, default_value_t = 1024)]
    nt_min: usize,
    #[arg(long, default_value_t = 6)]
    points: usize,
    #[arg(long, default_value = "fast,direct")]
    variants: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    s0: f64,
    /// Count kernel construction in the fast variant's wall time.
    #[arg(long)]
    include_setup: bool,
    /// Runs per cell; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, default_value = "scaling")]
    stem: String,
}

fn parse_variants(list: &str) -> fastcaputo::Result<Vec<Variant>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn soe_build(args: SoeBuildArgs) -> anyhow::Result<()> {
    let beta = match (args.alpha, args.beta) {
        (Some(a), None) => 1.0 + a,
        (None, Some(b)) => b,
        _ => return Err(Error::Configuration("give exactly one of --alpha or --beta".into()).into()),
    };
    let mut soe = build_soe(beta, args.delta, args.horizon, args.eps)?;
    let raw = soe.len();
    if args.reduce {
        soe = soe.reduce(args.eps);
    }
    eprintln!(
        "{raw} terms built, {} kept, certified error {:.3e} (tolerance {:.1e})",
        soe.len(),
        soe.certified_error(),
        args.eps
    );
    match args.output {
        Some(path) => fs::write(&path, soe.to_json()).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", soe.to_json()),
    }
    Ok(())
}

fn soe_check(args: SoeCheckArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", args.input.display())))?;
    let mut soe = SumOfExponentials::from_json(&text)?;
    let tolerance = args.eps.unwrap_or(soe.tolerance());
    let achieved = soe.certify(args.samples);
    println!(
        "{{\"terms\": {}, \"certified_error\": {achieved:e}, \"tolerance\": {tolerance:e}}}",
        soe.len()
    );
    if achieved > tolerance {
        return Err(Error::Construction { achieved, tolerance }.into());
    }
    Ok(())
}

fn quadrature(cmd: QuadratureCommand) -> anyhow::Result<()> {
    let rule = match cmd {
        QuadratureCommand::Legendre { n, a, b } => gauss_legendre(n, a, b)?,
        QuadratureCommand::Jacobi { n, gamma, a } => gauss_jacobi_power(n, gamma, a)?,
    };
    print!("{}", rule.to_csv());
    Ok(())
}

fn caputo_eval(cmd: CaputoCommand) -> anyhow::Result<()> {
    let CaputoCommand::Eval {
        alpha,
        dt,
        n,
        function,
        fast: _,
        direct,
        eps,
    } = cmd;
    let samples = function.samples(n, dt)?;
    let values = if direct {
        direct_caputo_series(&samples, dt, alpha)?
    } else {
        let horizon = (n as f64 * dt).max(dt);
        fast_caputo_series(Arc::new(FastKernel::build(alpha, dt, horizon, eps)?), &samples)?
    };
    let has_exact = function.exact(dt, alpha).is_some();
    println!(
        "{}",
        if has_exact {
            "step,t,value,exact"
        } else {
            "step,t,value"
        }
    );
    for (k, v) in values.iter().enumerate() {
        let t = (k + 1) as f64 * dt;
        match function.exact(t, alpha) {
            Some(e) => println!("{},{t:.12e},{v:.16e},{e:.16e}", k + 1),
            None => println!("{},{t:.12e},{v:.16e}", k + 1),
        }
    }
    Ok(())
}

fn write_profile(path: &PathBuf, xs: &[f64], u: &[f64]) -> anyhow::Result<()> {
    let mut out = String::from("x,u\n");
    for (x, v) in xs.iter().zip(u) {
        out.push_str(&format!("{x:.12e},{v:.16e}\n"));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn solve(args: SolveArgs) -> anyhow::Result<()> {
    let cfg = SolveConfig::fast(args.eps).with_variant(args.variant);
    let (summary, xs, last) = match args.kind {
        SolveKind::Linear => {
            let problem = manufactured_problem(args.alpha);
            let grid = problem.grid(args.ns, args.nt)?;
            let exact = problem
                .exact
                .clone()
                .expect("manufactured problem has an exact solution");
            let xs = grid.xs();
            let (mut sum, mut last) = (0.0, Vec::new());
            let stats = solve_linear_with(&problem, &grid, &cfg, &mut |k, u| {
                let t = grid.t(k);
                let e = u
                    .iter()
                    .zip(&xs)
                    .fold(0.0_f64, |m, (v, &x)| m.max((v - exact(x, t)).abs()));
                if k > 0 {
                    sum += e * e;
                }
                if k == grid.n_time {
                    last = u.to_vec();
                }
            })?;
            let e = (grid.dt * sum).sqrt();
            (
                serde_json::json!({ "problem": "linear", "error": e, "stats": stats_json(&stats) }),
                xs,
                last,
            )
        }
        SolveKind::Fisher | SolveKind::Huxley => {
            let reaction = if matches!(args.kind, SolveKind::Fisher) {
                ReactionKind::Fisher
            } else {
                ReactionKind::Huxley
            };
            let grid = GridSpec::new(-6.0, 6.0, args.ns, 1.0, args.nt, args.alpha)?;
            let mut last = Vec::new();
            let stats = solve_nonlinear_with(
                &reaction,
                &double_gaussian,
                &grid,
                &AbcParams::with_s0(args.s0),
                &cfg,
                &mut |k, u| {
                    if k == grid.n_time {
                        last = u.to_vec();
                    }
                },
            )?;
            let max = last.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            (
                serde_json::json!({ "problem": reaction.name(), "final_max": max, "stats": stats_json(&stats) }),
                grid.xs(),
                last,
            )
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(path) = &args.output {
        write_profile(path, &xs, &last)?;
    }
    Ok(())
}

fn stats_json(s: &fastcaputo::SolveStats) -> serde_json::Value {
    serde_json::json!({
        "wall_seconds": s.wall_seconds,
        "setup_seconds": s.setup_seconds,
        "n_exp": s.n_exp,
        "n_exp_half": s.n_exp_half,
        "peak_history_scalars": s.peak_history_scalars,
        "certified_error": s.certified_error,
        "certified_error_half": s.certified_error_half,
    })
}

fn convergence(args: ConvergenceArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(kind) = &args.kind {
        cfg.set("kind", kind)?;
    }
    if let Some(axis) = args.axis {
        cfg.set("axis", &axis.to_string())?;
    }
    if let Some(v) = &args.variants {
        cfg.set("variants", v)?;
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    let report = run_table_config(&cfg)?;
    print!("{}", report.to_csv()?);
    if let Some(dir) = &args.output_dir {
        for p in report.write(dir, &args.stem)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn scaling(args: ScalingArgs) -> anyhow::Result<()> {
    let kind: ExperimentKind = args.kind.parse()?;
    let mut spec = ScalingSpec::defaults(kind);
    spec.alpha = args.alpha;
    spec.n_space = args.ns;
    spec.nt_ladder = (0..args.points).map(|k| args.nt_min << k).collect();
    spec.variants = parse_variants(&args.variants)?;
    if let Some(eps) = args.eps {
        spec.eps = eps;
    }
    spec.s0 = args.s0;
    spec.include_setup = args.include_setup;
    spec.repeats = args.repeats;
    let report = run_scaling(&spec)?;
    print!("{}", report.to_csv()?);
    for fit in &report.slopes {
        eprintln!("{}: slope {:.3}", fit.variant, fit.slope);
    }
    if let Some(dir) = &args.output_dir {
        for p in report.write(dir, &args.stem)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn selftest() -> anyhow::Result<bool> {
    let checks = run_selftest();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        Some(_) => EXIT_CONFIG,
        None => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Soe(SoeCommand::Build(a)) => soe_build(a)?,
        Command::Soe(SoeCommand::Check(a)) => soe_check(a)?,
        Command::Quadrature(q) => quadrature(q)?,
        Command::Caputo(c) => caputo_eval(c)?,
        Command::Solve(a) => solve(a)?,
        Command::Convergence(a) => convergence(a)?,
        Command::Scaling(a) => scaling(a)?,
        Command::Selftest => return selftest(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_SELFTEST),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
