//! Certified sum-of-exponentials approximation of the power kernel `t^-beta`.
//!
//! The construction discretises the Laplace representation
//! `t^-beta = 1/Gamma(beta) int_0^inf e^{-ts} s^{beta-1} ds`: the integral is
//! truncated at a cutoff `p`, the end interval `[0, 2^m_low]` is handled by a
//! Gauss-Jacobi rule for the weight `s^{beta-1}`, and every dyadic interval
//! `[2^j, 2^{j+1}]` up to `p` by a Gauss-Legendre rule. Each quadrature node
//! becomes one exponential. The result is then certified by dense sampling
//! and panel orders are grown until the certificate holds.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi_power, gauss_legendre, QuadratureRule};
use crate::special::{gamma, CompensatedSum};

/// Default number of log-spaced certification samples.
pub const DEFAULT_CERT_SAMPLES: usize = 100_000;

const GROW_ROUNDS: usize = 8;
const GROW_FACTOR: f64 = 1.25;
// exp(-x) underflows to zero beyond this
const EXP_CUTOFF: f64 = 746.0;

/// `sum_i w_i exp(-s_i t)` approximating `t^-beta` on `[delta, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumOfExponentials {
    beta: f64,
    delta: f64,
    horizon: f64,
    tolerance: f64,
    exponents: Vec<f64>,
    weights: Vec<f64>,
    certified_error: f64,
}

/// Quadrature layout used by [`build_soe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoeBuildPlan {
    /// Upper truncation point `p` of the Laplace integral.
    pub cutoff_p: f64,
    /// The end interval is `[0, 2^m_low]`; small panels are `j = m_low..=-1`.
    pub m_low: i32,
    /// Large panels are `j = 0..=n_high`, clipped at `cutoff_p`.
    pub n_high: i32,
    pub n_end: usize,
    pub n_small: usize,
    pub n_large: usize,
}

/// Which group of panels a node came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PanelFamily {
    End,
    Small,
    Large,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    family: PanelFamily,
    lo: f64,
    hi: f64,
}

impl SoeBuildPlan {
    /// Upper bound on the number of terms the plan produces.
    pub fn term_bound(&self) -> usize {
        self.n_end + self.n_small * (-self.m_low).max(0) as usize + self.n_large * (self.n_high + 1).max(0) as usize
    }

    fn panels(&self) -> Vec<Panel> {
        let mut panels = vec![Panel {
            family: PanelFamily::End,
            lo: 0.0,
            hi: 2f64.powi(self.m_low),
        }];
        for j in self.m_low..0 {
            panels.push(Panel {
                family: PanelFamily::Small,
                lo: 2f64.powi(j),
                hi: 2f64.powi(j + 1),
            });
        }
        for j in 0..=self.n_high {
            let lo = 2f64.powi(j);
            let hi = 2f64.powi(j + 1).min(self.cutoff_p);
            if hi > lo {
                panels.push(Panel {
                    family: PanelFamily::Large,
                    lo,
                    hi,
                });
            }
        }
        panels
    }

    fn order(&self, family: PanelFamily) -> usize {
        match family {
            PanelFamily::End => self.n_end,
            PanelFamily::Small => self.n_small,
            PanelFamily::Large => self.n_large,
        }
    }
}

fn check_kernel_args(beta: f64, delta: f64, horizon: f64, eps: f64) -> Result<()> {
    if !(beta > 1.0 && beta < 2.0) {
        return Err(Error::input(format!("beta must lie in (1, 2), got {beta}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(horizon.is_finite() && horizon >= 1.0 && horizon >= delta) {
        return Err(Error::input(format!("horizon must be finite and >= 1, got {horizon}")));
    }
    if !(eps > 0.0 && eps < (-1f64).exp()) {
        return Err(Error::input(format!("tolerance must lie in (0, 1/e), got {eps}")));
    }
    Ok(())
}

/// Smallest `p >= 1/delta` with `5 exp(-delta p) p^2 <= eps`.
///
/// This bounds the tail `1/Gamma(beta) int_p^inf e^{-ts} s^{beta-1} ds` by
/// `eps` for every `t >= delta` and `beta` in (1, 2).
pub fn select_cutoff(delta: f64, eps: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(eps > 0.0 && eps < (-1f64).exp()) {
        return Err(Error::input(format!("eps must lie in (0, 1/e), got {eps}")));
    }
    let bound = |p: f64| 5.0 * (-delta * p).exp() * p * p;
    // The bound increases up to its maximum at p = 2/delta, where it already
    // exceeds 1/e, so the answer sits on the decreasing branch.
    let mut lo = 2.0 / delta;
    let mut hi = 2.0 * lo;
    while bound(hi) > eps {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if bound(mid) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn initial_order(log_term: f64) -> usize {
    ((0.6 * log_term).ceil() as usize + 2).max(2)
}

/// Panel layout and initial quadrature orders for `beta`, `[delta, horizon]`, `eps`.
pub fn plan_build(beta: f64, delta: f64, horizon: f64, eps: f64) -> Result<SoeBuildPlan> {
    check_kernel_args(beta, delta, horizon, eps)?;
    let cutoff_p = select_cutoff(delta, 0.5 * eps)?;
    let m_low = -(horizon.log2().ceil() as i32) - 1;
    let n_high = cutoff_p.log2().ceil() as i32;
    let ln_eps = (1.0 / eps).ln();
    let n_end = initial_order(ln_eps);
    Ok(SoeBuildPlan {
        cutoff_p,
        m_low,
        n_high,
        n_end,
        n_small: n_end,
        n_large: initial_order(ln_eps + (1.0 / delta).ln()),
    })
}

fn panel_rule(panel: &Panel, n: usize, beta: f64) -> Result<QuadratureRule> {
    match panel.family {
        PanelFamily::End => gauss_jacobi_power(n, beta - 1.0, panel.hi),
        _ => gauss_legendre(n, panel.lo, panel.hi),
    }
}

/// Terms `(s, w)` of one panel, not yet divided by `Gamma(beta)`.
fn panel_terms(panel: &Panel, n: usize, beta: f64) -> Result<Vec<(f64, f64)>> {
    let rule = panel_rule(panel, n, beta)?;
    Ok(match panel.family {
        PanelFamily::End => rule.iter().collect(),
        _ => rule.iter().map(|(s, w)| (s, w * s.powf(beta - 1.0))).collect(),
    })
}

fn assemble(plan: &SoeBuildPlan, beta: f64) -> Result<Vec<(f64, f64)>> {
    let inv_gamma = 1.0 / gamma(beta);
    let mut terms = Vec::with_capacity(plan.term_bound());
    for panel in plan.panels() {
        let n = plan.order(panel.family);
        terms.extend(
            panel_terms(&panel, n, beta)?
                .into_iter()
                .map(|(s, w)| (s, w * inv_gamma)),
        );
    }
    Ok(terms)
}

/// Estimated quadrature error of each panel family at the sample times,
/// measured against rules of twice the order plus ten.
fn family_errors(plan: &SoeBuildPlan, beta: f64, times: &[f64]) -> Result<[f64; 3]> {
    let mut worst = [0.0_f64; 3];
    let inv_gamma = 1.0 / gamma(beta);
    let mut per_family = vec![[0.0_f64; 3]; times.len()];
    for panel in plan.panels() {
        let n = plan.order(panel.family);
        let coarse = panel_terms(&panel, n, beta)?;
        let fine = panel_terms(&panel, 2 * n + 10, beta)?;
        let idx = panel.family as usize;
        for (k, &t) in times.iter().enumerate() {
            let c: f64 = coarse.iter().map(|(s, w)| w * (-s * t).exp()).sum();
            let f: f64 = fine.iter().map(|(s, w)| w * (-s * t).exp()).sum();
            per_family[k][idx] += (c - f).abs() * inv_gamma;
        }
    }
    for row in per_family {
        for (w, v) in worst.iter_mut().zip(row) {
            *w = w.max(v);
        }
    }
    Ok(worst)
}

/// Build and certify an approximation of `t^-beta` on `[delta, horizon]`
/// with uniform absolute error at most `eps`.
pub fn build_soe(beta: f64, delta: f64, horizon: f64, eps: f64) -> Result<SumOfExponentials> {
    build_soe_planned(beta, delta, horizon, eps).map(|(soe, _)| soe)
}

/// [`build_soe`] together with the plan (orders after growth) that produced it.
pub fn build_soe_planned(beta: f64, delta: f64, horizon: f64, eps: f64) -> Result<(SumOfExponentials, SoeBuildPlan)> {
    let mut plan = plan_build(beta, delta, horizon, eps)?;
    let mut achieved = f64::INFINITY;
    for _ in 0..GROW_ROUNDS {
        let terms = assemble(&plan, beta)?;
        let mut soe = SumOfExponentials::from_terms(beta, delta, horizon, eps, terms)?;
        achieved = soe.certify(DEFAULT_CERT_SAMPLES);
        if achieved <= eps {
            return Ok((soe, plan));
        }
        let panels = plan.panels();
        let budget_per_panel = 0.5 * eps / panels.len() as f64;
        let count = |f: PanelFamily| panels.iter().filter(|p| p.family == f).count() as f64;
        let probe = log_samples(delta, horizon, 200);
        let errors = family_errors(&plan, beta, &probe)?;
        let grow = |n: usize| ((n as f64 * GROW_FACTOR).ceil() as usize).max(n + 1);
        let mut grew = false;
        for (family, err) in [
            (PanelFamily::End, errors[0]),
            (PanelFamily::Small, errors[1]),
            (PanelFamily::Large, errors[2]),
        ] {
            if count(family) > 0.0 && err > budget_per_panel * count(family) {
                grew = true;
                match family {
                    PanelFamily::End => plan.n_end = grow(plan.n_end),
                    PanelFamily::Small => plan.n_small = grow(plan.n_small),
                    PanelFamily::Large => plan.n_large = grow(plan.n_large),
                }
            }
        }
        if !grew {
            plan.n_end = grow(plan.n_end);
            plan.n_small = grow(plan.n_small);
            plan.n_large = grow(plan.n_large);
        }
    }
    Err(Error::Construction {
        achieved,
        tolerance: eps,
    })
}

/// `n` log-uniform points on `[lo, hi]` with both endpoints included exactly.
pub fn log_samples(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let ratio = (hi / lo).ln();
    let mut out: Vec<f64> = (0..n).map(|k| lo * (ratio * k as f64 / (n - 1) as f64).exp()).collect();
    out[0] = lo;
    out[n - 1] = hi;
    out
}

impl SumOfExponentials {
    /// Wrap explicit terms. Exponents must be non-negative and strictly
    /// increasing after sorting; weights positive.
    pub fn from_terms(beta: f64, delta: f64, horizon: f64, tolerance: f64, mut terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::input("a sum of exponentials needs at least one term"));
        }
        if !(delta > 0.0 && horizon >= delta && tolerance > 0.0) {
            return Err(Error::input("need 0 < delta <= horizon and tolerance > 0"));
        }
        terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ok_exponents =
            terms.iter().all(|t| t.0 >= 0.0 && t.0.is_finite()) && terms.windows(2).all(|w| w[0].0 < w[1].0);
        let ok_weights = terms.iter().all(|t| t.1 > 0.0 && t.1.is_finite());
        if !ok_exponents || !ok_weights {
            return Err(Error::input(
                "exponents must be finite, >= 0 and distinct; weights finite and > 0",
            ));
        }
        let (exponents, weights) = terms.into_iter().unzip();
        Ok(Self {
            beta,
            delta,
            horizon,
            tolerance,
            exponents,
            weights,
            certified_error: f64::INFINITY,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Max sampled deviation from the last [`certify`](Self::certify) call
    /// (infinite before any certification).
    pub fn certified_error(&self) -> f64 {
        self.certified_error
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.exponents.iter().copied().zip(self.weights.iter().copied())
    }

    /// `sum_i w_i exp(-s_i t)`, ascending in `s_i`, compensated.
    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for (s, w) in self.terms() {
            let x = s * t;
            if x > EXP_CUTOFF {
                break;
            }
            acc.add(w * (-x).exp());
        }
        acc.value()
    }

    /// Max of `|eval(t) - t^-beta|` over `n_samples` log-spaced points of
    /// `[delta, horizon]`; the value is also stored as the certificate.
    pub fn certify(&mut self, n_samples: usize) -> f64 {
        let err = self.sampled_error(n_samples);
        self.certified_error = err;
        err
    }

    fn sampled_error(&self, n_samples: usize) -> f64 {
        log_samples(self.delta, self.horizon, n_samples)
            .into_iter()
            .map(|t| (self.eval(t) - t.powf(-self.beta)).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn with_certificate(mut self, certified_error: f64) -> Self {
        self.certified_error = certified_error;
        self
    }

    /// Greedy certified coarsening; see [`reduce_soe`].
    pub fn reduce(&self, eps_target: f64) -> SumOfExponentials {
        reduce_soe(self, eps_target)
    }

    /// JSON document with every float printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str(&format!("  \"beta\": {:.16e},\n", self.beta));
        out.push_str(&format!("  \"delta\": {:.16e},\n", self.delta));
        out.push_str(&format!("  \"horizon\": {:.16e},\n", self.horizon));
        out.push_str(&format!("  \"tolerance\": {:.16e},\n", self.tolerance));
        if self.certified_error.is_finite() {
            out.push_str(&format!("  \"certified_error\": {:.16e},\n", self.certified_error));
        } else {
            out.push_str("  \"certified_error\": null,\n");
        }
        out.push_str("  \"terms\": [\n");
        let n = self.len();
        for (i, (s, w)) in self.terms().enumerate() {
            let sep = if i + 1 == n { "" } else { "," };
            out.push_str(&format!("    {{\"s\": {s:.16e}, \"w\": {w:.16e}}}{sep}\n"));
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Term {
            s: f64,
            w: f64,
        }
        #[derive(Deserialize)]
        struct Doc {
            beta: f64,
            delta: f64,
            horizon: f64,
            tolerance: f64,
            certified_error: Option<f64>,
            terms: Vec<Term>,
        }
        let doc: Doc = serde_json::from_str(text)
            .map_err(|e| Error::input(format!("malformed sum-of-exponentials document: {e}")))?;
        let terms = doc.terms.into_iter().map(|t| (t.s, t.w)).collect();
        let soe = Self::from_terms(doc.beta, doc.delta, doc.horizon, doc.tolerance, terms)?;
        Ok(soe.with_certificate(doc.certified_error.unwrap_or(f64::INFINITY)))
    }
}

/// Free-function form of [`SumOfExponentials::eval`].
pub fn eval_soe(soe: &SumOfExponentials, t: f64) -> f64 {
    soe.eval(t)
}

/// Free-function form of [`SumOfExponentials::certify`].
pub fn certify_soe(soe: &mut SumOfExponentials, n_samples: usize) -> f64 {
    soe.certify(n_samples)
}

/// Replace two terms by one matching the pair's value and first derivative
/// at `t_match`. Works in log space so that pairs whose contribution
/// underflows at `t_match` still merge sensibly.
pub fn merge_terms(a: (f64, f64), b: (f64, f64), t_match: f64) -> (f64, f64) {
    let ra = a.1.ln() - a.0 * t_match;
    let rb = b.1.ln() - b.0 * t_match;
    let m = ra.max(rb);
    let ca = (ra - m).exp();
    let cb = (rb - m).exp();
    let total = ca + cb;
    let (lo, hi) = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    let s = ((a.0 * ca + b.0 * cb) / total).clamp(lo, hi);
    let w = (m + total.ln() + s * t_match).exp();
    (s, w)
}

/// Replace `window.len()` adjacent terms by one fewer, chosen as the Gauss
/// rule of the discrete measure `sum_i w_i e^{-s_i t_match} delta(s - s_i)`.
///
/// The replacement reproduces the first `2m - 2` moments of the window's
/// exponents at `t_match`; for a pair it reduces to [`merge_terms`].
pub fn compress_window(window: &[(f64, f64)], t_match: f64) -> Option<Vec<(f64, f64)>> {
    let m = window.len();
    if m < 2 {
        return None;
    }
    let lo = window[0].0;
    let hi = window[m - 1].0;
    if m == 2 || hi <= lo {
        let mut acc = window[0];
        for &t in &window[1..] {
            acc = merge_terms(acc, t, t_match);
        }
        return if m == 2 { Some(vec![acc]) } else { None };
    }
    let logs: Vec<f64> = window.iter().map(|(s, w)| w.ln() - s * t_match).collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mu: Vec<f64> = logs.iter().map(|r| (r - shift).exp()).collect();
    let mass: f64 = mu.iter().sum();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let x: Vec<f64> = window.iter().map(|(s, _)| (s - mid) / half).collect();

    // Lanczos on diag(x) from sqrt(mu), fully reorthogonalised
    let k = m - 1;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut diag = Vec::with_capacity(k);
    let mut offdiag = Vec::with_capacity(k);
    let norm0 = mass.sqrt();
    basis.push(mu.iter().map(|v| v.sqrt() / norm0).collect());
    for j in 0..k {
        let q = &basis[j];
        let mut v: Vec<f64> = q.iter().zip(&x).map(|(a, b)| a * b).collect();
        let a: f64 = v.iter().zip(q).map(|(p, r)| p * r).sum();
        diag.push(a);
        if j + 1 == k {
            break;
        }
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(p, r)| p * r).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        let beta = v.iter().map(|p| p * p).sum::<f64>().sqrt();
        if !(beta > 1e-13) {
            return None;
        }
        offdiag.push(beta);
        basis.push(v.into_iter().map(|p| p / beta).collect());
    }
    let (nodes, weights) = crate::quadrature::golub_welsch(&diag, &offdiag, mass).ok()?;
    let mut out = Vec::with_capacity(k);
    for (xn, wn) in nodes.into_iter().zip(weights) {
        let s = mid + half * xn;
        let w = (wn.ln() + shift + s * t_match).exp();
        if !(s > lo && s < hi && w > 0.0 && w.is_finite()) {
            return None;
        }
        out.push((s, w));
    }
    if out.windows(2).all(|p| p[0].0 < p[1].0) {
        Some(out)
    } else {
        None
    }
}

const REDUCE_WINDOWS: [usize; 5] = [24, 12, 6, 3, 2];

/// Greedy certified coarsening.
///
/// Windows of adjacent-in-`s` terms are repeatedly replaced by one fewer
/// term (see [`compress_window`]) as long as the sampled error stays within
/// `eps_target`. Each replacement is matched at the log-midpoint of
/// `[delta, horizon]`, then at the window's own time scale `1/s`, then at
/// `delta`. Returns the input unchanged when nothing can be removed, or when
/// `eps_target` is below the input tolerance.
pub fn reduce_soe(soe: &SumOfExponentials, eps_target: f64) -> SumOfExponentials {
    if !(eps_target >= soe.tolerance) || soe.len() < 2 {
        return soe.clone();
    }
    // sparse sample sets drive the search, the dense one certifies; a search
    // that misses a narrow excursion is retried on more samples
    for (n_samples, margin) in REDUCE_STAGES {
        let terms = greedy_reduce(soe, margin * eps_target, n_samples);
        if terms.len() == soe.len() {
            return soe.clone();
        }
        if let Ok(mut reduced) = SumOfExponentials::from_terms(soe.beta, soe.delta, soe.horizon, eps_target, terms) {
            if reduced.certify(DEFAULT_CERT_SAMPLES) <= eps_target {
                return reduced;
            }
        }
    }
    soe.clone()
}

const REDUCE_STAGES: [(usize, f64); 3] = [(2_000, 0.98), (10_000, 0.99), (DEFAULT_CERT_SAMPLES, 0.999)];

fn greedy_reduce(soe: &SumOfExponentials, accept: f64, n_samples: usize) -> Vec<(f64, f64)> {
    let samples = log_samples(soe.delta, soe.horizon, n_samples);
    let coarse_idx: Vec<usize> = (0..samples.len())
        .step_by((n_samples / 2000).max(5))
        .chain([samples.len() - 1])
        .collect();
    let mut residual: Vec<f64> = samples.iter().map(|&t| soe.eval(t) - t.powf(-soe.beta)).collect();
    let t_mid = (soe.delta * soe.horizon).sqrt();
    let mut terms: Vec<(f64, f64)> = soe.terms().collect();
    let mut deltas: Vec<f64> = Vec::with_capacity(samples.len());

    let sum_at = |ts: &[(f64, f64)], t: f64| -> f64 {
        ts.iter()
            .map(|&(s, w)| {
                let x = s * t;
                if x > EXP_CUTOFF {
                    0.0
                } else {
                    w * (-x).exp()
                }
            })
            .sum()
    };

    for &len in &REDUCE_WINDOWS {
        loop {
            let mut changed = false;
            let mut i = 0;
            while i + 1 < terms.len() {
                let end = (i + len).min(terms.len());
                let window = terms[i..end].to_vec();
                let s_bar = window.iter().map(|t| t.0).sum::<f64>() / window.len() as f64;
                let t_own = if s_bar > 0.0 {
                    (1.0 / s_bar).clamp(soe.delta, soe.horizon)
                } else {
                    soe.horizon
                };
                let mut accepted = false;
                for t_match in [t_mid, t_own, soe.delta] {
                    let Some(replacement) = compress_window(&window, t_match) else {
                        continue;
                    };
                    let delta = |t: f64| sum_at(&replacement, t) - sum_at(&window, t);
                    // beyond `last` both the window and its replacement are
                    // too small to push any sample over the limit
                    let r_max = residual.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
                    let s_min = window[0].0.min(replacement[0].0);
                    let mass: f64 =
                        window.iter().map(|t| t.1).sum::<f64>() + replacement.iter().map(|t| t.1).sum::<f64>();
                    let slack = accept - r_max;
                    let last = if slack > 0.0 && s_min > 0.0 {
                        samples.partition_point(|&t| mass * (-s_min * t).exp() >= slack)
                    } else {
                        samples.len()
                    };
                    let coarse_ok = coarse_idx
                        .iter()
                        .take_while(|&&k| k < last)
                        .all(|&k| (residual[k] + delta(samples[k])).abs() <= accept);
                    if !coarse_ok {
                        continue;
                    }
                    deltas.clear();
                    let full_ok = samples[..last].iter().zip(&residual).all(|(&t, r)| {
                        let d = delta(t);
                        deltas.push(d);
                        (r + d).abs() <= accept
                    });
                    if !full_ok {
                        continue;
                    }
                    for (r, d) in residual.iter_mut().zip(&deltas) {
                        *r += d;
                    }
                    terms.splice(i..end, replacement);
                    accepted = true;
                    break;
                }
                if accepted {
                    changed = true;
                } else {
                    i += (len / 2).max(1);
                }
            }
            if !changed {
                break;
            }
        }
    }

    terms
}
