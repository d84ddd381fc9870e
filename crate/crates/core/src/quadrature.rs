//! Gauss-Legendre and power-weight Gauss-Jacobi rules.
//!
//! Both families are generated from the three-term recurrence of the
//! corresponding orthogonal polynomials. Nodes are the eigenvalues of the
//! symmetric Jacobi matrix (implicit QL with Wilkinson shifts), refined by a
//! Newton step on the orthonormal recurrence; weights come from the
//! Christoffel function, which keeps small end weights accurate to full
//! relative precision.

use crate::error::{Error, Result};

const EIG_TOLERANCE: f64 = 1e-15;
const EIG_MAX_SWEEPS: usize = 100;

/// Nodes and weights of an interpolatory Gauss rule on `[a, b]` for the
/// weight `s^gamma` (`gamma = 0` for Legendre).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: (f64, f64),
    weight_exponent: f64,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn weight_exponent(&self) -> f64 {
        self.weight_exponent
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `sum_k w_k f(x_k)`; the weight function is already absorbed in `w_k`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// One `node,weight` line per node, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,weight\n");
        for (x, w) in self.iter() {
            out.push_str(&format!("{x:.16e},{w:.16e}\n"));
        }
        out
    }
}

/// Recurrence coefficients of the monic orthogonal polynomials together with
/// the zeroth moment of the weight.
struct Recurrence {
    diag: Vec<f64>,
    // `offdiag_sq[k]` is beta_k for k >= 1; index 0 unused.
    offdiag_sq: Vec<f64>,
    mass: f64,
}

fn legendre_recurrence(n: usize) -> Recurrence {
    let diag = vec![0.0; n + 1];
    let offdiag_sq = (0..=n)
        .map(|k| {
            let k = k as f64;
            if k == 0.0 {
                0.0
            } else {
                k * k / (4.0 * k * k - 1.0)
            }
        })
        .collect();
    Recurrence {
        diag,
        offdiag_sq,
        mass: 2.0,
    }
}

/// Weight `s^gamma` on `[0, 1]`, i.e. the Jacobi weight `(1 - x)^0 (1 + x)^gamma`
/// on `[-1, 1]` pulled back through `s = (1 + x) / 2`.
fn power_weight_recurrence(n: usize, gamma: f64) -> Recurrence {
    let (a, b) = (0.0_f64, gamma);
    let ab = a + b;
    let mut diag = Vec::with_capacity(n + 1);
    let mut offdiag_sq = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let kf = k as f64;
        let alpha = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        let beta = match k {
            0 => 0.0,
            1 => 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab)),
            _ => {
                let s = 2.0 * kf + ab;
                4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
            }
        };
        diag.push(0.5 * (1.0 + alpha));
        offdiag_sq.push(0.25 * beta);
    }
    Recurrence {
        diag,
        offdiag_sq,
        mass: 1.0 / (gamma + 1.0),
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `offdiag` (`offdiag[i]` couples rows `i` and `i + 1`),
/// sorted ascending, paired with the first component of each unit
/// eigenvector.
fn tridiagonal_eigen(mut d: Vec<f64>, offdiag: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = d.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&offdiag[..n - 1]);
    // first row of the accumulated rotation matrix
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= EIG_TOLERANCE * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > EIG_MAX_SWEEPS {
                return Err(Error::Internal(format!(
                    "tridiagonal QL did not converge for eigenvalue {l} within {EIG_MAX_SWEEPS} sweeps"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0_f64, 1.0_f64, 0.0_f64);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs)
}

/// Golub-Welsch: nodes and weights of the Gauss rule whose Jacobi matrix has
/// diagonal `diag` and off-diagonal `offdiag`, for a measure of total mass `mass`.
pub(crate) fn golub_welsch(diag: &[f64], offdiag: &[f64], mass: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs = tridiagonal_eigen(diag.to_vec(), offdiag)?;
    Ok(pairs.into_iter().map(|(x, v)| (x, mass * v * v)).unzip())
}

/// Orthonormal polynomial values `p_0..p_n` and derivative `p_n'` at `x`.
fn orthonormal_eval(rec: &Recurrence, n: usize, x: f64, values: &mut [f64]) -> (f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / rec.mass.sqrt();
    let mut dp_prev = 0.0;
    let mut dp = 0.0;
    values[0] = p;
    for k in 0..n {
        let b_k = rec.offdiag_sq[k].sqrt();
        let b_next = rec.offdiag_sq[k + 1].sqrt();
        let p_next = ((x - rec.diag[k]) * p - b_k * p_prev) / b_next;
        let dp_next = ((x - rec.diag[k]) * dp + p - b_k * dp_prev) / b_next;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
        values[k + 1] = p;
    }
    (p, dp)
}

/// Rule on the reference interval of `rec`.
fn gauss_from_recurrence(rec: &Recurrence, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let offdiag: Vec<f64> = (1..n).map(|k| rec.offdiag_sq[k].sqrt()).collect();
    let mut nodes: Vec<f64> = tridiagonal_eigen(rec.diag[..n].to_vec(), &offdiag)?
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    let mut weights = vec![0.0; n];
    let mut values = vec![0.0; n + 1];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..3 {
            let (p, dp) = orthonormal_eval(rec, n, *x, &mut values);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() <= f64::EPSILON * x.abs().max(1e-300) {
                break;
            }
        }
        orthonormal_eval(rec, n, *x, &mut values);
        let christoffel: f64 = values[..n].iter().map(|v| v * v).sum();
        *w = 1.0 / christoffel;
    }
    Ok((nodes, weights))
}

fn check_rule(rule: &QuadratureRule) -> Result<()> {
    let (a, b) = rule.interval;
    let ordered = rule.nodes.windows(2).all(|w| w[0] < w[1]);
    let inside = rule.nodes.iter().all(|&x| x > a && x < b);
    let positive = rule.weights.iter().all(|&w| w > 0.0 && w.is_finite());
    if ordered && inside && positive {
        Ok(())
    } else {
        Err(Error::Internal(format!(
            "generated {}-point rule on [{a}, {b}] violates node/weight invariants",
            rule.len()
        )))
    }
}

/// `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::input("quadrature order must be at least 1"));
    }
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::input(format!("invalid interval [{a}, {b}]")));
    }
    let rec = legendre_recurrence(n);
    let (mut reference, mut ref_weights) = gauss_from_recurrence(&rec, n)?;
    // enforce the exact reflection symmetry of the Legendre rule
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (reference[j] - reference[i]);
        reference[i] = -x;
        reference[j] = x;
        let w = 0.5 * (ref_weights[i] + ref_weights[j]);
        ref_weights[i] = w;
        ref_weights[j] = w;
    }
    if n % 2 == 1 {
        reference[n / 2] = 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let rule = QuadratureRule {
        nodes: reference.iter().map(|x| mid + half * x).collect(),
        weights: ref_weights.iter().map(|w| half * w).collect(),
        interval: (a, b),
        weight_exponent: 0.0,
    };
    check_rule(&rule)?;
    Ok(rule)
}

/// `n`-point Gauss-Jacobi rule on `[0, a]` for the weight `s^gamma`.
///
/// The weight is absorbed into the returned weights, so that
/// `sum_k w_k f(s_k)` approximates `int_0^a s^gamma f(s) ds`.
pub fn gauss_jacobi_power(n: usize, gamma: f64, a: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::input("quadrature order must be at least 1"));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::input(format!(
            "Gauss-Jacobi interval end must be positive, got {a}"
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::input(format!("weight exponent must be >= 0, got {gamma}")));
    }
    if gamma == 0.0 {
        return gauss_legendre(n, 0.0, a);
    }
    let rec = power_weight_recurrence(n, gamma);
    let (reference, ref_weights) = gauss_from_recurrence(&rec, n)?;
    let scale = a.powf(gamma + 1.0);
    let rule = QuadratureRule {
        nodes: reference.iter().map(|s| a * s).collect(),
        weights: ref_weights.iter().map(|w| scale * w).collect(),
        interval: (0.0, a),
        weight_exponent: gamma,
    };
    check_rule(&rule)?;
    Ok(rule)
}
