//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fastcaputo::special::gamma;

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // stop at the tolerance or once the correction is lost to rounding
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= (15.0 * tol).max(floor) {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

/// Caputo derivative `1/Gamma(1-a) int_0^t u'(s) (t-s)^-a ds` of order `a`.
///
/// The substitution `w = (t-s)^(1-a)` removes the endpoint singularity, so
/// the remaining integrand is bounded and adaptive Simpson converges.
pub fn caputo_oracle(du: &dyn Fn(f64) -> f64, t: f64, a: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let p = 1.0 / (1.0 - a);
    let upper = t.powf(1.0 - a);
    let g = |w: f64| du((t - w.powf(p)).max(0.0));
    adaptive_simpson(&g, 0.0, upper, 1e-15) * p / gamma(1.0 - a)
}

/// Smooth bounded path `sum_k c_k sin(w_k t + phi_k)` with `sum |c_k| <= 1`.
#[derive(Debug, Clone)]
pub struct SmoothPath {
    pub modes: Vec<(f64, f64, f64)>,
}

impl SmoothPath {
    pub fn eval(&self, t: f64) -> f64 {
        self.modes.iter().map(|(c, w, p)| c * (w * t + p).sin()).sum()
    }

    pub fn samples(&self, n: usize, dt: f64) -> Vec<f64> {
        (0..=n).map(|k| self.eval(k as f64 * dt)).collect()
    }

    pub fn from_params(params: &[(f64, f64, f64)]) -> Self {
        let total: f64 = params.iter().map(|(c, _, _)| c.abs()).sum::<f64>().max(1.0);
        Self {
            modes: params.iter().map(|&(c, w, p)| (c / total, w, p)).collect(),
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
