//! Caputo derivative of order `alpha` in (0, 1) on a uniform time grid.
//!
//! Two evaluators share the [`CaputoMemory`] interface: the direct L1 scheme,
//! which keeps every past sample, and the fast scheme, which splits the
//! convolution into a local L1 panel and a history part carried by one
//! exponential recurrence per term of a sum-of-exponentials kernel.
//!
//! Both work on a batch of independent sample streams (one per spatial node)
//! so that a solver can drive all nodes with one call per step. A single
//! stream is just a batch of one; see [`FastCaputoState`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::soe::{build_soe, SumOfExponentials};
use crate::special::{compensated_sum, gamma, CompensatedSum};

/// Below this value of `x = s dt` the step weights use their Taylor series.
pub const X_SWITCH: f64 = 1e-2;
const SERIES_TERMS: usize = 8;
// node-count x term-count above which history updates run on the thread pool
const PARALLEL_WORK: usize = 1 << 16;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("time step must be positive and finite, got {dt}")))
    }
}

/// L1 coefficients `a_k = (k+1)^(1-alpha) - k^(1-alpha)`, extended on demand.
#[derive(Debug, Clone)]
pub struct L1Weights {
    alpha: f64,
    coeffs: Vec<f64>,
}

impl L1Weights {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            coeffs: vec![1.0],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Make `a_0..a_{n-1}` available.
    pub fn ensure(&mut self, n: usize) {
        let e = 1.0 - self.alpha;
        while self.coeffs.len() < n {
            let k = self.coeffs.len() as f64;
            // k^e ((1 + 1/k)^e - 1) avoids cancellation for large k
            self.coeffs.push(k.powf(e) * (e * (1.0 / k).ln_1p()).exp_m1());
        }
    }

    /// `a_k`, extending the table if needed.
    pub fn get(&mut self, k: usize) -> f64 {
        self.ensure(k + 1);
        self.coeffs[k]
    }

    /// The cached prefix `a_0, a_1, ...`.
    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }
}

/// `Delta t^(-alpha) / Gamma(2 - alpha)`, the weight of the newest sample.
pub fn l1_lead(alpha: f64, dt: f64) -> f64 {
    dt.powf(-alpha) / gamma(2.0 - alpha)
}

/// Direct L1 approximation of the Caputo derivative at `t_n`, `n = samples.len() - 1`.
///
/// Written in difference form `sum_k a_k (u^(n-k) - u^(n-k-1))`, which is
/// algebraically the usual coefficient form and gives exactly zero for constants.
pub fn caputo_l1_direct(samples: &[f64], dt: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_dt(dt)?;
    if samples.len() < 2 {
        return Err(Error::input("direct L1 needs at least two samples"));
    }
    let n = samples.len() - 1;
    let mut weights = L1Weights::new(alpha)?;
    weights.ensure(n);
    let a = weights.as_slice();
    let sum = compensated_sum((0..n).map(|k| a[k] * (samples[n - k] - samples[n - k - 1])));
    Ok(l1_lead(alpha, dt) * sum)
}

/// Weights of the two samples of one linear history panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWeights {
    /// Weight of the later sample.
    pub lambda1: f64,
    /// Weight of the earlier sample.
    pub lambda2: f64,
}

/// `int e^{-s(t_n - tau)} Pi_1 u(tau) dtau` over `[t_{n-2}, t_{n-1}]`, split
/// into the coefficients of `u^(n-1)` and `u^(n-2)`.
pub fn step_weights(s: f64, dt: f64) -> StepWeights {
    let x = s * dt;
    let ex = (-x).exp();
    // bracket / x^2 for both weights
    let (p, q) = if x < X_SWITCH {
        // (e^-x - 1 + x)/x^2 = sum_{k>=2} (-x)^(k-2)/k!
        // (1 - e^-x - x e^-x)/x^2 = sum_{k>=2} (k-1)(-x)^(k-2)/k!
        let mut p = 0.0;
        let mut q = 0.0;
        let mut term = 0.5;
        for j in 0..SERIES_TERMS {
            let k = (j + 2) as f64;
            p += term;
            q += (k - 1.0) * term;
            term *= -x / (k + 1.0);
        }
        (p, q)
    } else {
        // expm1 keeps the brackets accurate just above the switch
        let x2 = x * x;
        let em = (-x).exp_m1();
        ((em + x) / x2, (-em - x * ex) / x2)
    };
    StepWeights {
        lambda1: dt * ex * p,
        lambda2: dt * ex * q,
    }
}

const STIFF_CUTOFF: f64 = 1e-150;

/// Precomputed per-term constants for the fast recurrence.
#[derive(Debug, Clone)]
pub struct FastKernel {
    alpha: f64,
    dt: f64,
    soe: SumOfExponentials,
    decay: Vec<f64>,
    lambda1: Vec<f64>,
    lambda2: Vec<f64>,
    omega: Vec<f64>,
    lead: f64,
    inv_gamma_1ma: f64,
    dt_pow: f64,
}

impl FastKernel {
    /// Wrap an existing expansion of `t^-(1+alpha)` certified on `[delta, T]` with `delta <= dt`.
    pub fn new(alpha: f64, dt: f64, soe: SumOfExponentials) -> Result<Self> {
        check_alpha(alpha)?;
        check_dt(dt)?;
        if (soe.beta() - (1.0 + alpha)).abs() > 1e-14 {
            return Err(Error::input(format!(
                "kernel exponent {} does not match 1 + alpha = {}",
                soe.beta(),
                1.0 + alpha
            )));
        }
        if soe.delta() > dt * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "kernel is certified from {} which exceeds the time step {dt}",
                soe.delta()
            )));
        }
        let mut decay = Vec::with_capacity(soe.len());
        let mut lambda1 = Vec::with_capacity(soe.len());
        let mut lambda2 = Vec::with_capacity(soe.len());
        let mut omega = Vec::with_capacity(soe.len());
        for (s, w) in soe.terms() {
            let sw = step_weights(s, dt);
            let ex = (-s * dt).exp();
            // such stiff terms add nothing visible and would drive their history into subnormals
            let keep = if ex < STIFF_CUTOFF { 0.0 } else { 1.0 };
            decay.push(keep * ex);
            lambda1.push(keep * sw.lambda1);
            lambda2.push(keep * sw.lambda2);
            omega.push(w);
        }
        Ok(Self {
            alpha,
            dt,
            soe,
            decay,
            lambda1,
            lambda2,
            omega,
            lead: l1_lead(alpha, dt),
            inv_gamma_1ma: 1.0 / gamma(1.0 - alpha),
            dt_pow: dt.powf(-alpha),
        })
    }

    /// Build the expansion for `[dt, max(horizon, 1)]` at tolerance `eps` and wrap it.
    pub fn build(alpha: f64, dt: f64, horizon: f64, eps: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_dt(dt)?;
        let soe = build_soe(1.0 + alpha, dt, horizon.max(1.0), eps)?;
        Self::new(alpha, dt, soe)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn soe(&self) -> &SumOfExponentials {
        &self.soe
    }

    /// Number of exponentials.
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    fn advance(&self, hist: &mut [f64], newer: f64, older: f64) {
        for i in 0..hist.len() {
            hist[i] = self.decay[i] * hist[i] + self.lambda1[i] * newer + self.lambda2[i] * older;
        }
    }

    fn weighted(&self, hist: &[f64]) -> f64 {
        hist.iter().zip(&self.omega).map(|(h, w)| h * w).sum()
    }
}

type KernelKey = (u64, u64, u64, u64, bool);

/// Shared kernel for `(alpha, dt, horizon, eps)`, optionally reduced to `eps`.
///
/// Kernels are cached for the life of the process, so repeated solver runs
/// on the same grid pay for construction once.
pub fn cached_kernel(alpha: f64, dt: f64, horizon: f64, eps: f64, reduce: bool) -> Result<Arc<FastKernel>> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<FastKernel>>>> = OnceLock::new();
    let key = (alpha.to_bits(), dt.to_bits(), horizon.to_bits(), eps.to_bits(), reduce);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&key) {
        return Ok(Arc::clone(k));
    }
    check_alpha(alpha)?;
    check_dt(dt)?;
    let mut soe = build_soe(1.0 + alpha, dt, horizon.max(1.0), eps)?;
    if reduce {
        soe = soe.reduce(eps);
    }
    let kernel = Arc::new(FastKernel::new(alpha, dt, soe)?);
    cache
        .lock()
        .expect("kernel cache poisoned")
        .insert(key, Arc::clone(&kernel));
    Ok(kernel)
}

/// Sample memory of a batch of Caputo evaluators.
///
/// After `u^0, ..., u^(n-1)` have been committed, the derivative at `t_n` is
/// `lead() * u^n + history_j` where `history_j` comes from [`history_into`].
///
/// [`history_into`]: CaputoMemory::history_into
pub trait CaputoMemory: Send {
    /// Number of independent streams.
    fn nodes(&self) -> usize;

    /// Coefficient of the newest sample.
    fn lead(&self) -> f64;

    /// Number of committed time levels.
    fn committed(&self) -> usize;

    /// Everything in the derivative at the next level except `lead * u^n`.
    fn history_into(&self, out: &mut [f64]) -> Result<()>;

    /// Append one time level; `values.len()` must equal `nodes()`.
    fn commit(&mut self, values: &[f64]) -> Result<()>;

    /// Number of stored history scalars (excluding the few per-node samples).
    fn resident_scalars(&self) -> usize;

    /// Derivative at the next level given the new samples.
    fn evaluate_into(&self, values: &[f64], out: &mut [f64]) -> Result<()> {
        self.history_into(out)?;
        let lead = self.lead();
        for (o, v) in out.iter_mut().zip(values) {
            *o += lead * v;
        }
        Ok(())
    }
}

fn check_batch(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::State(format!("expected {expected} values, got {got}")))
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::State("non-finite sample committed".into()))
    }
}

/// Direct L1 memory: stores every increment, costs `O(n)` per node and step.
#[derive(Debug, Clone)]
pub struct DirectL1Memory {
    nodes: usize,
    dt: f64,
    lead: f64,
    weights: L1Weights,
    latest: Vec<f64>,
    // increments u^m - u^(m-1) for m = 1.., level-major in one buffer
    increments: Vec<f64>,
    committed: usize,
}

impl DirectL1Memory {
    pub fn new(alpha: f64, dt: f64, nodes: usize) -> Result<Self> {
        check_alpha(alpha)?;
        check_dt(dt)?;
        Ok(Self {
            nodes,
            dt,
            lead: l1_lead(alpha, dt),
            weights: L1Weights::new(alpha)?,
            latest: vec![0.0; nodes],
            increments: Vec::new(),
            committed: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl CaputoMemory for DirectL1Memory {
    fn nodes(&self) -> usize {
        self.nodes
    }

    fn lead(&self) -> f64 {
        self.lead
    }

    fn committed(&self) -> usize {
        self.committed
    }

    fn history_into(&self, out: &mut [f64]) -> Result<()> {
        check_batch(self.nodes, out.len())?;
        if self.committed == 0 {
            return Err(Error::State("no initial sample committed".into()));
        }
        let a = self.weights.as_slice();
        let n = self.committed;
        for (o, u) in out.iter_mut().zip(&self.latest) {
            *o = -u;
        }
        // D u^n / lead = (u^n - u^(n-1)) + sum_{k=1}^{n-1} a_k d^(n-k)
        if self.nodes > 0 {
            for (k, level) in (1..n).zip(self.increments.chunks_exact(self.nodes).rev()) {
                let ak = a[k];
                for (o, d) in out.iter_mut().zip(level) {
                    *o += ak * d;
                }
            }
        }
        for o in out.iter_mut() {
            *o *= self.lead;
        }
        Ok(())
    }

    fn commit(&mut self, values: &[f64]) -> Result<()> {
        check_batch(self.nodes, values.len())?;
        check_finite(values)?;
        if self.committed > 0 {
            self.increments
                .extend(values.iter().zip(&self.latest).map(|(v, u)| v - u));
        }
        self.latest.copy_from_slice(values);
        self.committed += 1;
        self.weights.ensure(self.committed);
        Ok(())
    }

    fn resident_scalars(&self) -> usize {
        self.increments.len()
    }
}

/// Fast memory: one accumulator per node and exponential, `O(N_exp)` per node and step.
#[derive(Debug, Clone)]
pub struct FastMemory {
    kernel: Arc<FastKernel>,
    nodes: usize,
    // node-major: node j owns history[j*len .. (j+1)*len]
    history: Vec<f64>,
    u0: Vec<f64>,
    u_prev: Vec<f64>,
    u_prev2: Vec<f64>,
    committed: usize,
}

impl FastMemory {
    pub fn new(kernel: Arc<FastKernel>, nodes: usize) -> Self {
        let len = kernel.len();
        Self {
            kernel,
            nodes,
            history: vec![0.0; nodes * len],
            u0: vec![0.0; nodes],
            u_prev: vec![0.0; nodes],
            u_prev2: vec![0.0; nodes],
            committed: 0,
        }
    }

    pub fn kernel(&self) -> &Arc<FastKernel> {
        &self.kernel
    }

    /// History accumulators of node `j`.
    pub fn node_history(&self, j: usize) -> &[f64] {
        let len = self.kernel.len();
        &self.history[j * len..(j + 1) * len]
    }

    /// Advance every accumulator across the panel `[t_{n-2}, t_{n-1}]`
    /// using the two most recent committed samples.
    fn history_update(&mut self) -> Result<()> {
        if self.committed < 2 {
            return Err(Error::State("history update needs two committed samples".into()));
        }
        let len = self.kernel.len();
        if len == 0 {
            return Ok(());
        }
        let kernel = &*self.kernel;
        let (newer, older) = (&self.u_prev, &self.u_prev2);
        let body = |(j, hist): (usize, &mut [f64])| kernel.advance(hist, newer[j], older[j]);
        if self.nodes * len >= PARALLEL_WORK {
            self.history.par_chunks_mut(len).enumerate().for_each(body);
        } else {
            self.history.chunks_mut(len).enumerate().for_each(body);
        }
        Ok(())
    }
}

impl CaputoMemory for FastMemory {
    fn nodes(&self) -> usize {
        self.nodes
    }

    fn lead(&self) -> f64 {
        self.kernel.lead
    }

    fn committed(&self) -> usize {
        self.committed
    }

    fn history_into(&self, out: &mut [f64]) -> Result<()> {
        check_batch(self.nodes, out.len())?;
        let k = &*self.kernel;
        match self.committed {
            0 => Err(Error::State("no initial sample committed".into())),
            1 => {
                for (o, u) in out.iter_mut().zip(&self.u_prev) {
                    *o = -k.lead * u;
                }
                Ok(())
            }
            n => {
                let t_n = n as f64 * k.dt;
                let tail = t_n.powf(-k.alpha);
                let len = k.len();
                let body = |(j, o): (usize, &mut f64)| {
                    let hist = &self.history[j * len..(j + 1) * len];
                    let up = self.u_prev[j];
                    let memory = up * k.dt_pow - self.u0[j] * tail - k.alpha * k.weighted(hist);
                    *o = -k.lead * up + k.inv_gamma_1ma * memory;
                };
                if self.nodes * len >= PARALLEL_WORK {
                    out.par_iter_mut().enumerate().for_each(body);
                } else {
                    out.iter_mut().enumerate().for_each(body);
                }
                Ok(())
            }
        }
    }

    fn commit(&mut self, values: &[f64]) -> Result<()> {
        check_batch(self.nodes, values.len())?;
        check_finite(values)?;
        if self.committed == 0 {
            self.u0.copy_from_slice(values);
        }
        std::mem::swap(&mut self.u_prev2, &mut self.u_prev);
        self.u_prev.copy_from_slice(values);
        self.committed += 1;
        if self.committed >= 2 {
            self.history_update()?;
        }
        Ok(())
    }

    fn resident_scalars(&self) -> usize {
        self.history.len()
    }
}

/// Fast evaluator for a single sample stream.
#[derive(Debug, Clone)]
pub struct FastCaputoState {
    memory: FastMemory,
}

impl FastCaputoState {
    pub fn new(kernel: Arc<FastKernel>) -> Self {
        Self {
            memory: FastMemory::new(kernel, 1),
        }
    }

    /// Record the next sample `u^n`.
    pub fn commit(&mut self, u: f64) -> Result<()> {
        self.memory.commit(&[u])
    }

    /// Derivative at the next time level given its sample.
    pub fn evaluate(&self, u_n: f64) -> Result<f64> {
        let mut out = [0.0];
        self.memory.evaluate_into(&[u_n], &mut out)?;
        Ok(out[0])
    }

    /// Number of samples committed so far.
    pub fn step(&self) -> usize {
        self.memory.committed
    }

    /// Accumulators `U_hist,i` (all zero until two samples are committed).
    pub fn history(&self) -> &[f64] {
        self.memory.node_history(0)
    }

    pub fn kernel(&self) -> &Arc<FastKernel> {
        &self.memory.kernel
    }
}

/// Derivatives at `t_1..t_n` of one sampled path by the direct L1 scheme.
pub fn direct_caputo_series(samples: &[f64], dt: f64, alpha: f64) -> Result<Vec<f64>> {
    let mut memory = DirectL1Memory::new(alpha, dt, 1)?;
    drive(&mut memory, samples)
}

/// Derivatives at `t_1..t_n` of one sampled path by the fast scheme.
pub fn fast_caputo_series(kernel: Arc<FastKernel>, samples: &[f64]) -> Result<Vec<f64>> {
    let mut memory = FastMemory::new(kernel, 1);
    drive(&mut memory, samples)
}

fn drive(memory: &mut dyn CaputoMemory, samples: &[f64]) -> Result<Vec<f64>> {
    let Some((&first, rest)) = samples.split_first() else {
        return Ok(Vec::new());
    };
    memory.commit(&[first])?;
    let mut out = Vec::with_capacity(rest.len());
    for &u in rest {
        let mut d = [0.0];
        memory.evaluate_into(&[u], &mut d)?;
        out.push(d[0]);
        memory.commit(&[u])?;
    }
    Ok(out)
}

/// Local truncation bound of the L1 scheme for `|u''| <= max_u2`.
pub fn l1_truncation_bound(alpha: f64, dt: f64, max_u2: f64) -> f64 {
    let c = (1.0 - alpha) / 12.0 + 2f64.powf(2.0 - alpha) / (2.0 - alpha) - (1.0 + 2f64.powf(-alpha));
    dt.powf(2.0 - alpha) / gamma(2.0 - alpha) * c * max_u2
}

/// L1 bound plus the history error of a kernel with tolerance `eps`.
pub fn fast_truncation_bound(alpha: f64, dt: f64, eps: f64, t_prev: f64, max_u2: f64, max_u: f64) -> f64 {
    l1_truncation_bound(alpha, dt, max_u2) + alpha * eps * t_prev * max_u / gamma(1.0 - alpha)
}

/// Analysis coefficients `a_n`, `b_n` (`n = 0..n_max`) of the assembled fast scheme,
/// `a_n = alpha dt^alpha sum_j w_j e^{-n s_j dt} lambda1_j` and likewise `b_n`.
pub fn ab_coefficients(soe: &SumOfExponentials, dt: f64, n_max: usize) -> (Vec<f64>, Vec<f64>) {
    let alpha = soe.beta() - 1.0;
    let scale = alpha * dt.powf(alpha);
    let terms: Vec<(f64, StepWeights, f64)> = soe
        .terms()
        .map(|(s, w)| ((-s * dt).exp(), step_weights(s, dt), w))
        .collect();
    let mut a = Vec::with_capacity(n_max);
    let mut b = Vec::with_capacity(n_max);
    let mut powers: Vec<f64> = vec![1.0; terms.len()];
    for _ in 0..n_max {
        let mut sa = CompensatedSum::new();
        let mut sb = CompensatedSum::new();
        for ((decay, sw, w), p) in terms.iter().zip(powers.iter_mut()) {
            sa.add(w * *p * sw.lambda1);
            sb.add(w * *p * sw.lambda2);
            *p *= decay;
        }
        a.push(scale * sa.value());
        b.push(scale * sb.value());
    }
    (a, b)
}
