//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use fastcaputo::caputo::cached_kernel;
use fastcaputo::{FastKernel, Result};

/// `sin(3 t_k)` for `k = 0..=n` on a grid of step `dt`.
pub fn sine_samples(n: usize, dt: f64) -> Vec<f64> {
    (0..=n).map(|k| (3.0 * k as f64 * dt).sin()).collect()
}

/// Reduced kernel for `[dt, max(n dt, 1)]`, built once per process.
pub fn kernel(alpha: f64, dt: f64, n: usize, eps: f64) -> Result<Arc<FastKernel>> {
    cached_kernel(alpha, dt, (n as f64 * dt).max(1.0), eps, true)
}
