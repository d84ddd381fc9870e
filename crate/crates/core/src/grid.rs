//! Space-time grids, discrete norms and convergence rates.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Uniform grid `x_i = x_left + i h` (`i = 0..=n_space`), `t_n = n dt` (`n = 0..=n_time`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_left: f64,
    pub x_right: f64,
    pub n_space: usize,
    pub dt: f64,
    pub n_time: usize,
    pub alpha: f64,
}

impl GridSpec {
    /// Grid on `[x_left, x_right] x [0, horizon]` with `n_space` and `n_time` intervals.
    pub fn new(x_left: f64, x_right: f64, n_space: usize, horizon: f64, n_time: usize, alpha: f64) -> Result<Self> {
        let grid = Self {
            x_left,
            x_right,
            n_space,
            dt: horizon / n_time as f64,
            n_time,
            alpha,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_left.is_finite() && self.x_right.is_finite() && self.x_left < self.x_right) {
            return Err(Error::input(format!(
                "spatial interval [{}, {}] is empty or not finite",
                self.x_left, self.x_right
            )));
        }
        if self.n_space < 2 {
            return Err(Error::input(format!(
                "need at least 2 spatial intervals, got {}",
                self.n_space
            )));
        }
        if self.n_time < 1 || !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::input(format!(
                "need a positive time step and at least one step, got dt = {}, n_time = {}",
                self.dt, self.n_time
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.x_right - self.x_left) / self.n_space as f64
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_time as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_left + i as f64 * self.h()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.n_space).map(|i| self.x(i)).collect()
    }
}

/// Which Caputo evaluator a solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Direct,
    Fast,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Direct => "direct",
            Variant::Fast => "fast",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Variant::Direct),
            "fast" => Ok(Variant::Fast),
            other => Err(Error::Configuration(format!("unknown variant '{other}'"))),
        }
    }
}

/// `||u||^2 = h (u_0^2/2 + sum u_i^2 + u_N^2/2)`.
pub fn l2_norm_sq(u: &[f64], h: f64) -> f64 {
    let n = u.len();
    if n == 0 {
        return 0.0;
    }
    let inner: f64 = u.iter().map(|v| v * v).sum();
    h * (inner - 0.5 * (u[0] * u[0] + u[n - 1] * u[n - 1]))
}

/// `||delta_x u||^2 = h sum ((u_{i+1} - u_i)/h)^2`.
pub fn grad_norm_sq(u: &[f64], h: f64) -> f64 {
    u.windows(2).map(|p| (p[1] - p[0]) * (p[1] - p[0])).sum::<f64>() / h
}

pub fn max_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `sqrt(dt sum_{k>=1} e_k^2)` from per-step maximum errors `e_1..e_N`.
pub fn space_time_norm(per_step: &[f64], dt: f64) -> f64 {
    (dt * per_step.iter().map(|e| e * e).sum::<f64>()).sqrt()
}

/// Errors of a computed solution against an exact one.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorNorms {
    /// `E(h, dt) = sqrt(dt sum_k ||e^k||_inf^2)`.
    pub e_norm: f64,
    /// `||e^k||_inf` for `k = 1..=n_time`.
    pub per_step: Vec<f64>,
}

/// Compare `levels[k]` (`k = 0..=n_time`) with `exact(x_i, t_k)`.
pub fn error_norms(levels: &[Vec<f64>], exact: &dyn Fn(f64, f64) -> f64, grid: &GridSpec) -> ErrorNorms {
    let xs = grid.xs();
    let per_step: Vec<f64> = levels
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, u)| {
            let t = grid.t(k);
            u.iter()
                .zip(&xs)
                .fold(0.0_f64, |m, (v, &x)| m.max((v - exact(x, t)).abs()))
        })
        .collect();
    ErrorNorms {
        e_norm: space_time_norm(&per_step, grid.dt),
        per_step,
    }
}

/// `log2(e_k / e_{k+1})` for consecutive entries of a halving ladder.
pub fn rates(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|p| (p[0] / p[1]).log2()).collect()
}
